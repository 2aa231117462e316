import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgff_lab import ParameterError
from dgff_lab.closedform import BETA_C
from dgff_lab.overlap import OverlapHistogram
from dgff_lab.pd import (pattern_matrix, pd_replica_moment, pd_vs_field_overlap, permuted,
                         replica_sum, sample_pd, set_partitions)

from oracles import brute_replica_sum, gem_weights


def coincide(d):
    return float(d[0, 1])


def test_weights_are_a_decreasing_subprobability():
    for alpha in (0.1, 0.5, 0.9):
        w = sample_pd(alpha, 500, 3)
        assert np.all(np.diff(w.weights) <= 0)
        assert w.weights.min() >= 0 and w.weights.max() <= 1
        assert w.retained <= 1 + 1e-12
        assert w.retained + w.tail_mass == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(ValueError):
            w.weights[0] = 0.0


def test_sampling_is_deterministic():
    assert np.array_equal(sample_pd(0.5, 100, 7).weights, sample_pd(0.5, 100, 7).weights)
    assert not np.array_equal(sample_pd(0.5, 100, 7).weights, sample_pd(0.5, 100, 8).weights)


def test_parameter_errors():
    for a in (0.0, 1.0, -0.5):
        with pytest.raises(ParameterError):
            sample_pd(a, 10, 0)
    with pytest.raises(ParameterError):
        sample_pd(0.5, 0, 0)
    with pytest.raises(ParameterError):
        pd_replica_moment(0.5, 1, coincide)
    with pytest.raises(ParameterError):
        pd_replica_moment(0.5, 2, coincide, method="magic")


def test_truncation_deficit_shrinks_with_K():
    deficits = []
    for K in (100, 1000, 10_000):
        deficits.append(np.mean([1 - sample_pd(0.5, K, s).retained for s in range(200)]))
    assert deficits[0] > deficits[1] > deficits[2]
    assert deficits[0] < 0.05


def test_set_partitions_are_bell_numbers():
    assert [len(list(set_partitions(range(n)))) for n in range(1, 6)] == [1, 2, 5, 15, 52]
    p = pattern_matrix([[0, 2], [1]], 3)
    assert p.tolist() == [[True, False, True], [False, True, False], [True, False, True]]


def _random_F(s, seed):
    table = {}
    rng = np.random.default_rng(seed)

    def F(d):
        key = np.asarray(d, dtype=bool).tobytes()
        if key not in table:
            table[key] = rng.uniform(-1, 2)
        return table[key]
    # evaluate every pattern once so the table no longer depends on call order
    for part in set_partitions(range(s)):
        F(pattern_matrix(part, s))
    return F


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=5), st.integers(2, 4), st.integers(0, 10 ** 6))
def test_partition_sum_matches_brute_force(w, s, seed):
    F = _random_F(s, seed)
    assert replica_sum(w, s, F) == pytest.approx(brute_replica_sum(w, s, F), abs=1e-10)


def test_normalization_is_exact():
    for s in (2, 3, 4):
        assert pd_replica_moment(0.5, s, lambda d: 1.0, samples=300, K=1000) == \
            pytest.approx(1.0, abs=1e-12)


def test_pair_coincidence_moment():
    m, se = pd_replica_moment(0.5, 2, coincide, samples=20_000, K=2000, seed=1,
                              return_stderr=True)
    assert m == pytest.approx(0.5, abs=0.01) and se < 0.005
    m_ne = pd_replica_moment(0.5, 2, lambda d: 1.0 - d[0, 1], samples=20_000, K=2000, seed=1)
    assert m + m_ne == pytest.approx(1.0, abs=1e-12)


def test_triple_coincidence_moment():
    # E sum xi^3 for PD(alpha, 0) is (1 - alpha)(2 - alpha)/2
    m, se = pd_replica_moment(0.5, 3, lambda d: float(d.all()), samples=20_000, K=2000, seed=2,
                              return_stderr=True)
    assert abs(m - 0.375) < 4 * se


def test_stick_breaking_agrees():
    rng = np.random.default_rng(4)
    gem = np.array([np.sum(gem_weights(0.5, 2000, rng) ** 2) for _ in range(5000)])
    m, se = pd_replica_moment(0.5, 2, coincide, samples=5000, K=2000, seed=5, return_stderr=True)
    assert abs(gem.mean() - m) < 4 * math.hypot(se, gem.std() / math.sqrt(len(gem)))


def test_sampling_method_agrees_with_exact():
    exact = pd_replica_moment(0.4, 3, lambda d: float(d[0, 1]) + float(d[1, 2]),
                              samples=4000, K=500, seed=6)
    m, se = pd_replica_moment(0.4, 3, lambda d: float(d[0, 1]) + float(d[1, 2]),
                              samples=4000, K=500, seed=7, method="sample", return_stderr=True)
    assert abs(m - exact) < 4 * se + 0.01


@pytest.mark.parametrize("s", [3, 4])
def test_exchangeability(s):
    F = _random_F(s, 11)
    base = pd_replica_moment(0.5, s, F, samples=500, K=1000, seed=3)
    for perm in itertools.islice(itertools.permutations(range(s)), 1, None):
        assert pd_replica_moment(0.5, s, permuted(F, perm), samples=500, K=1000, seed=3) == \
            pytest.approx(base, abs=1e-12)


def test_degenerate_limits():
    vals = [pd_replica_moment(a, 2, coincide, samples=3000, K=2000, seed=8)
            for a in (0.05, 0.5, 0.95)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[0] > 0.9 and vals[2] < 0.1


def _hist(x_interior):
    r = np.linspace(0, 1, 101)
    x = np.where(r < 1, x_interior, 1.0)
    return OverlapHistogram(r, x, np.full(101, 0.01), 100, 10, 0.0)


def test_comparison_report():
    rep = pd_vs_field_overlap(2 * BETA_C, _hist(0.45), samples=4000, K=1000)
    assert rep["target_interior"] == pytest.approx(0.5)
    row = rep["rows"][1]
    assert row["r"] == 0.5 and row["discrepancy"] == pytest.approx(-0.05)
    assert row["z"] == pytest.approx(-5.0)
    assert abs(rep["one_minus_target"] - rep["pair_coincidence"]) < 4 * rep["pair_coincidence_stderr"]
    rep = pd_vs_field_overlap(4 * BETA_C, _hist(0.3), samples=4000, K=1000)
    assert rep["target_interior"] == pytest.approx(0.25)
    assert abs(rep["one_minus_target"] - rep["pair_coincidence"]) < 4 * rep["pair_coincidence_stderr"]
    with pytest.raises(ParameterError):
        pd_vs_field_overlap(BETA_C, _hist(0.5))
