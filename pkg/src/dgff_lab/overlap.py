"""Replica overlaps, the two-overlap distribution and the Bovier-Kurkova checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ParameterError
from .field import BoxGeometry, GreenProvider, green_provider, sample_dgff
from .gibbs import GibbsContext, boundary_mass, free_energy
from .lattice import VertexSet, bulk_region
from .multiscale import psi_field, residual_covariance
from .seeding import derive_seed

DEFAULT_R_GRID = np.linspace(0.0, 1.0, 101)


def overlap_q(green: GreenProvider, v, w, N: int) -> float:
    """q(v, w) = G(v, w) / ((1/pi) log N^2)."""
    return green(v, w) * math.pi / math.log(N * N)


def overlap_alpha(geom: BoxGeometry, alpha: float, v, w) -> float:
    """Overlap at scale alpha: residual covariance normalized like q."""
    return residual_covariance(geom, alpha, v, w) * math.pi / math.log(geom.N ** 2)


@dataclass(frozen=True)
class OverlapValue:
    v: tuple
    w: tuple
    q: float
    q_alpha: float | None = None


def overlap_value(green: GreenProvider, v, w, alpha: float | None = None) -> OverlapValue:
    geom = green.geom
    qa = overlap_alpha(geom, alpha, v, w) if alpha is not None else None
    return OverlapValue(tuple(v), tuple(w), overlap_q(green, v, w, geom.N), qa)


def pair_overlaps(ctx: GibbsContext, pairs: int, rng: np.random.Generator,
                  green: GreenProvider) -> np.ndarray:
    """q(v, v') for ``pairs`` independent draws from the product Gibbs measure."""
    idx = ctx.draw_indices((pairs, 2), rng)
    coords = ctx.region.coords
    g = green.pairs(coords[idx[:, 0]], coords[idx[:, 1]])
    return g * math.pi / math.log(ctx.region.geom.N ** 2)


@dataclass
class OverlapConfig:
    N: int
    beta: float
    rho: float | None = None  # None: Gibbs measure on all of V_N
    disorder_samples: int = 10
    pairs_per_sample: int = 10_000
    seed: int = 0
    r_grid: np.ndarray = field(default_factory=lambda: DEFAULT_R_GRID.copy())

    def __post_init__(self):
        if self.N < 2:
            raise ParameterError("N must be at least 2")
        if self.beta < 0:
            raise ParameterError("beta must be nonnegative")
        if self.rho is not None and not 0 < self.rho < 1:
            raise ParameterError("rho must lie in (0, 1)")
        if self.disorder_samples < 1 or self.pairs_per_sample < 1:
            raise ParameterError("need at least one disorder sample and one pair")
        self.r_grid = np.asarray(self.r_grid, dtype=float)


@dataclass
class DisorderResult:
    """Per-disorder-sample accumulator; merged across samples in task order."""
    sample_id: int
    cdf: np.ndarray             # fraction of pairs with q <= r, per grid point
    above_one: float            # fraction of pairs with q > 1
    boundary_mass: float | None
    green_hits: int = 0


@dataclass
class OverlapHistogram:
    r: np.ndarray
    x: np.ndarray
    stderr: np.ndarray
    pairs_per_sample: int
    disorder_samples: int
    above_one: float
    config: OverlapConfig | None = None
    per_sample: np.ndarray | None = None

    def at(self, r: float) -> tuple[float, float]:
        i = int(np.argmin(np.abs(self.r - r)))
        return float(self.x[i]), float(self.stderr[i])


def overlap_disorder_sample(config: OverlapConfig, sample_id: int,
                            green: GreenProvider | None = None) -> DisorderResult:
    """Field, Gibbs measure and replica pairs for one disorder realization."""
    geom = BoxGeometry(config.N)
    green = green or green_provider(geom)
    phi = sample_dgff(geom, derive_seed(config.seed, sample_id, "field"))
    region = bulk_region(geom, config.rho) if config.rho is not None else None
    ctx = GibbsContext.from_field(phi.values, config.beta, region)
    rng = np.random.default_rng(derive_seed(config.seed, sample_id, "pairs"))
    hits = green.hits
    q = np.sort(pair_overlaps(ctx, config.pairs_per_sample, rng, green))
    cdf = np.searchsorted(q, config.r_grid, side="right") / len(q)
    mass = None
    if config.rho is not None:
        full = GibbsContext.from_field(phi.values, config.beta)
        mass = boundary_mass(full, config.rho)
    return DisorderResult(sample_id, cdf, float(np.mean(q > 1)), mass, green.hits - hits)


def merge_results(config: OverlapConfig, results: list[DisorderResult]) -> OverlapHistogram:
    results = sorted(results, key=lambda r: r.sample_id)
    per = np.array([r.cdf for r in results])
    D = len(results)
    x = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(D) if D > 1 else np.full_like(x, np.nan)
    above = float(np.mean([r.above_one for r in results]))
    return OverlapHistogram(config.r_grid.copy(), x, se, config.pairs_per_sample, D,
                            above, config, per)


def two_overlap_distribution(config: OverlapConfig, r_grid=None, workers: int = 1) -> OverlapHistogram:
    """Monte Carlo estimate of r -> E G^{x2}{q(v, v') <= r}, with between-sample standard errors."""
    if r_grid is not None:
        config.r_grid = np.asarray(r_grid, dtype=float)
    from .parallel import map_tasks
    results = map_tasks(overlap_disorder_sample, [(config, d) for d in range(config.disorder_samples)],
                        workers)
    return merge_results(config, results)


# -- Bovier-Kurkova identities ------------------------------------------------

def integral_of_cdf(q: np.ndarray, alpha: float) -> float:
    """Exact integral over [alpha, 1] of the empirical CDF r -> mean(q <= r).

    Integrates the step function between its sorted breakpoints.
    """
    if alpha >= 1:
        return 0.0
    q = np.sort(np.asarray(q, dtype=float))
    pts = np.concatenate([[alpha], q[(q > alpha) & (q < 1)], [1.0]])
    heights = np.searchsorted(q, pts[:-1], side="right") / len(q)
    return float(np.dot(np.diff(pts), heights))


def integral_rhs(q: np.ndarray, alpha: float) -> float:
    """(1 - alpha) - E[q - alpha; q >= alpha] with q capped at 1."""
    q = np.minimum(np.asarray(q, dtype=float), 1.0)
    return float((1 - alpha) - np.mean(np.where(q >= alpha, q - alpha, 0.0)))


def bk_integral_identity(sample, beta: float, rho: float, alpha: float,
                         pairs: int = 10_000, seed: int = 0,
                         green: GreenProvider | None = None) -> tuple[float, float, float]:
    """Both sides of the integral identity on one shared set of replica pairs."""
    if not 0 <= alpha <= 1:
        raise ParameterError("alpha must lie in [0, 1]")
    geom = sample.geom
    green = green or green_provider(geom)
    ctx = GibbsContext.from_field(sample.values, beta, bulk_region(geom, rho))
    q = pair_overlaps(ctx, pairs, np.random.default_rng(seed), green)
    lhs = integral_of_cdf(q, alpha)
    rhs = integral_rhs(q, alpha)
    return lhs, rhs, lhs - rhs


def bk_derivative_identity(sample, beta: float, rho: float, alpha: float,
                           du: float = 1e-4) -> tuple[float, float, float]:
    """u-derivative of the (alpha, (1, 1+u)) free energy against its Gibbs-average form.

    lhs: (pi/beta^2) times the central difference of f_{N,rho} in u.
    rhs: pi * <phi_v - phi_[v]_alpha> / (beta log N^2), the Gibbs average taken
    by exact summation over A_{N,rho} at u = 0.
    """
    if du <= 0:
        raise ParameterError("du must be positive")
    N = sample.geom.N
    L = math.log(N * N)
    psi = psi_field(sample, alpha, 1.0, 1.0, rho)
    plus = free_energy(psi.coarse + (1 + du) * psi.fine, beta, N)
    minus = free_energy(psi.coarse + (1 - du) * psi.fine, beta, N)
    lhs = math.pi / beta ** 2 * (plus - minus) / (2 * du) if beta > 0 else 0.0
    if beta > 0:
        ctx = GibbsContext(psi.region, psi.values, beta)
        rhs = math.pi * ctx.average(psi.fine) / (beta * L)
    else:
        rhs = 0.0
    return lhs, rhs, lhs - rhs


def restricted_vs_full(config: OverlapConfig, workers: int = 1):
    """Overlap CDFs under the full and the bulk-restricted Gibbs measure, same disorder."""
    if config.rho is None:
        raise ParameterError("config.rho must be set")
    full_cfg = OverlapConfig(config.N, config.beta, None, config.disorder_samples,
                             config.pairs_per_sample, config.seed, config.r_grid)
    return two_overlap_distribution(full_cfg, workers=workers), \
        two_overlap_distribution(config, workers=workers)

