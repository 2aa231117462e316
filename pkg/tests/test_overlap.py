import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgff_lab import ParameterError
from dgff_lab.closedform import BETA_C
from dgff_lab.field import BoxGeometry, GreenProvider, green_provider, sample_dgff, spectral_pairs
from dgff_lab.gibbs import GibbsContext, free_energy
from dgff_lab.multiscale import psi_field
from dgff_lab.overlap import (OverlapConfig, bk_derivative_identity, bk_integral_identity,
                              integral_of_cdf, integral_rhs, merge_results,
                              overlap_alpha, overlap_disorder_sample, overlap_q, overlap_value,
                              pair_overlaps, restricted_vs_full, two_overlap_distribution)

from oracles import quadrature_cdf_integral


def test_overlap_on_two_by_two_box():
    gp = GreenProvider(BoxGeometry(2))
    assert overlap_q(gp, (1, 1), (1, 2), 2) == pytest.approx((1 / 3) * math.pi / math.log(4))
    assert overlap_q(gp, (1, 1), (2, 2), 2) == overlap_q(gp, (2, 2), (1, 1), 2)


def test_bulk_overlap_band():
    N = 64
    gp = green_provider(BoxGeometry(N))
    rng = np.random.default_rng(0)
    L = math.log(N * N)
    for _ in range(200):
        v = tuple(rng.integers(17, 49, 2))
        w = tuple(rng.integers(17, 49, 2))
        if v == w:
            continue
        d2 = (v[0] - w[0]) ** 2 + (v[1] - w[1]) ** 2
        assert abs(overlap_q(gp, v, w, N) - (1 - math.log(d2) / L)) < 0.35


def test_scale_overlap_diagonal_drifts_to_one_minus_alpha():
    gaps = [abs(overlap_alpha(BoxGeometry(N), 0.5, (N // 2, N // 2), (N // 2, N // 2)) - 0.5)
            for N in (32, 64, 256, 1024)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_scale_overlap_close_pair_band():
    N, alpha = 64, 0.5
    L = math.log(N * N)
    for d in (1, 2, 3):
        qa = overlap_alpha(BoxGeometry(N), alpha, (32, 32), (32, 32 + d))
        assert abs(qa - (1 - alpha - math.log(d * d) / L)) < 0.35


def test_scale_overlap_needs_a_real_box():
    with pytest.raises(ParameterError):
        overlap_alpha(BoxGeometry(32), 1.0, (16, 16), (16, 16))


def test_overlap_value_record():
    gp = green_provider(BoxGeometry(32))
    ov = overlap_value(gp, (16, 16), (17, 16), alpha=0.5)
    assert ov.q == pytest.approx(overlap_q(gp, (16, 16), (17, 16), 32))
    assert ov.q_alpha == pytest.approx(overlap_alpha(BoxGeometry(32), 0.5, (16, 16), (17, 16)))
    assert overlap_value(gp, (3, 4), (5, 6)).q_alpha is None


def test_histogram_is_a_distribution_function():
    cfg = OverlapConfig(32, 2 * BETA_C, disorder_samples=4, pairs_per_sample=2000, seed=3)
    h = two_overlap_distribution(cfg)
    assert np.all(np.diff(h.x) >= 0) and h.x.min() >= 0 and h.x.max() <= 1
    assert h.x[-1] + h.above_one == pytest.approx(1.0, abs=1e-12)
    for row in h.per_sample:
        assert np.all(np.diff(row) >= 0)
    x, se = h.at(0.5)
    assert x == h.x[50] and se == h.stderr[50]


def test_high_temperature_matches_uniform_pairs():
    N = 64
    cfg = OverlapConfig(N, 0.0, disorder_samples=2, pairs_per_sample=20_000, seed=1)
    h = two_overlap_distribution(cfg)
    rng = np.random.default_rng(99)
    v = rng.integers(1, N + 1, (20_000, 2))
    w = rng.integers(1, N + 1, (20_000, 2))
    q = spectral_pairs(N, v, w) * math.pi / math.log(N * N)
    ref = np.mean(q <= 0.5)
    assert ref > 0.9
    assert h.at(0.5)[0] == pytest.approx(ref, abs=0.01)


def test_results_do_not_depend_on_worker_count():
    cfg = OverlapConfig(24, 2 * BETA_C, disorder_samples=3, pairs_per_sample=500, seed=8)
    a = two_overlap_distribution(cfg, workers=1)
    b = two_overlap_distribution(cfg, workers=2)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.stderr, b.stderr)


def test_merge_is_order_independent():
    cfg = OverlapConfig(24, 3.0, disorder_samples=4, pairs_per_sample=300, seed=2)
    res = [overlap_disorder_sample(cfg, d) for d in range(4)]
    a = merge_results(cfg, res)
    b = merge_results(cfg, res[::-1])
    assert np.array_equal(a.x, b.x)


def test_restricted_measure_reports_boundary_mass():
    cfg = OverlapConfig(32, 2 * BETA_C, rho=0.25, disorder_samples=1, pairs_per_sample=100)
    r = overlap_disorder_sample(cfg, 0)
    assert 0 <= r.boundary_mass <= 1


def test_restricted_and_full_estimators_agree_up_to_boundary_mass():
    cfg = OverlapConfig(128, 2 * BETA_C, rho=0.25, disorder_samples=20, pairs_per_sample=2000)
    full, restricted = restricted_vs_full(cfg)
    mass = np.mean([overlap_disorder_sample(cfg, d).boundary_mass for d in range(20)])
    se = np.hypot(full.stderr, restricted.stderr)
    assert np.all(np.abs(full.x - restricted.x) <= 2 * mass + 4 * se + 1e-12)


def test_high_overlap_pairs_are_close():
    alpha, eps, beta = 0.5, 0.1, 2 * BETA_C
    worst = []
    for N in (64, 128):
        g = BoxGeometry(N)
        gp = green_provider(g)
        c = 0.0
        for d in range(10):
            ctx = GibbsContext.from_field(sample_dgff(g, d).values, beta)
            rng = np.random.default_rng(d)
            idx = ctx.draw_indices((2000, 2), rng)
            v, w = ctx.region.coords[idx[:, 0]], ctx.region.coords[idx[:, 1]]
            q = gp.pairs(v, w) * math.pi / math.log(N * N)
            sel = q >= alpha + eps
            if sel.any():
                d2 = np.sum((v - w) ** 2, axis=1)[sel]
                c = max(c, d2.max() / N ** (2 * (1 - alpha - eps)))
        worst.append(c)
    # one constant bounds both sizes
    assert max(worst) < 1.0


def test_config_validation():
    for kw in [dict(N=1, beta=1.0), dict(N=8, beta=-1.0), dict(N=8, beta=1.0, rho=1.2),
               dict(N=8, beta=1.0, disorder_samples=0)]:
        with pytest.raises(ParameterError):
            OverlapConfig(**kw)


# -- identities --------------------------------------------------------------

@settings(max_examples=100)
@given(st.lists(st.floats(-0.2, 1.4), min_size=1, max_size=60), st.floats(0, 1))
def test_integral_identity_holds_for_any_empirical_measure(q, alpha):
    q = np.array(q)
    assert abs(integral_of_cdf(q, alpha) - integral_rhs(q, alpha)) < 1e-12


def test_integral_identity_per_sample():
    phi = sample_dgff(BoxGeometry(32), 4)
    for alpha in (0.0, 0.3, 0.5, 0.9):
        lhs, rhs, diff = bk_integral_identity(phi, 2 * BETA_C, 0.25, alpha, pairs=5000, seed=1)
        assert abs(diff) < 1e-12 and lhs == pytest.approx(rhs, abs=1e-12)


def test_integral_identity_edges():
    phi = sample_dgff(BoxGeometry(32), 5)
    lhs, rhs, _ = bk_integral_identity(phi, 1.0, 0.25, 1.0, pairs=1000)
    assert lhs == 0.0 and rhs == 0.0
    gp = green_provider(phi.geom)
    from dgff_lab.lattice import bulk_region
    ctx = GibbsContext.from_field(phi.values, 1.0, bulk_region(phi.geom, 0.25))
    q = pair_overlaps(ctx, 5000, np.random.default_rng(0), gp)
    assert integral_of_cdf(q, 0.0) == pytest.approx(quadrature_cdf_integral(q, 0.0), abs=1e-4)
    lhs, _, _ = bk_integral_identity(phi, 1.0, 0.25, 0.0, pairs=5000, seed=0)
    assert lhs == pytest.approx(integral_of_cdf(q, 0.0), abs=1e-15)
    with pytest.raises(ParameterError):
        bk_integral_identity(phi, 1.0, 0.25, 1.5)


def test_derivative_identity():
    phi = sample_dgff(BoxGeometry(32), 6)
    for beta in (0.5, 1.0, 2.0):
        lhs, rhs, diff = bk_derivative_identity(phi, beta, 0.25, 0.5)
        assert abs(diff) < 1e-6
    assert bk_derivative_identity(phi, 0.0, 0.25, 0.5)[:2] == (0.0, 0.0)
    with pytest.raises(ParameterError):
        bk_derivative_identity(phi, 1.0, 0.25, 0.5, du=0.0)


def test_free_energy_convex_in_u():
    phi = sample_dgff(BoxGeometry(32), 7)
    psi = psi_field(phi, 0.5, 1.0, 1.0, 0.25)
    for beta in (1.0, 2 * BETA_C):
        f = [free_energy(psi.coarse + (1 + u) * psi.fine, beta, 32) for u in (-1e-4, 0.0, 1e-4)]
        assert f[0] + f[2] - 2 * f[1] >= -1e-10
