"""Conditional expectations over neighborhoods and the two-scale field psi.

phi_[v]_a = E[phi_v | field outside [v]_a] is, by the Markov property, the
harmonic average of phi over the outer boundary ring of [v]_a, weighted by
the exit distribution of the walk started at v.  Inside A_{N,rho} with
rho < alpha every [v]_alpha is an unclipped translate of one box, so a single
kernel per side length serves every vertex.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import ParameterError
from .field import (FieldSample, _solve_column, functional_covariance,
                    spectral_coefficients)
from .lattice import BoxGeometry, VertexSet, bulk_region, neighborhood_side


@dataclass(frozen=True)
class HarmonicKernel:
    side: int
    offsets: np.ndarray  # (K, 2) boundary vertex minus start vertex
    weights: np.ndarray  # (K,) exit probabilities

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(a), int(b)): float(w) for (a, b), w in zip(self.offsets, self.weights)}


def exit_distribution(side: int, start) -> HarmonicKernel:
    """Exit law of the walk from ``start`` (1-based, inside the box) of a side x side box.

    One interior Green solve G_B(start, .) and p(u) = G_B(start, w)/4 for the
    unique box vertex w adjacent to the outside vertex u.
    """
    if side < 1:
        raise ParameterError("box side must be positive")
    a, b = start
    if not (1 <= a <= side and 1 <= b <= side):
        raise ParameterError(f"start {start} is not inside the box")
    col = _solve_column(side, a, b)
    k = np.arange(1, side + 1)
    offs, ws = [], []
    for edge_pts, inner in (
        ((np.zeros_like(k), k), (np.ones_like(k), k)),
        ((np.full_like(k, side + 1), k), (np.full_like(k, side), k)),
        ((k, np.zeros_like(k)), (k, np.ones_like(k))),
        ((k, np.full_like(k, side + 1)), (k, np.full_like(k, side))),
    ):
        offs.append(np.stack([edge_pts[0] - a, edge_pts[1] - b], axis=1))
        ws.append(0.25 * col[inner[0] - 1, inner[1] - 1])
    offsets = np.concatenate(offs)
    weights = np.concatenate(ws)
    offsets.setflags(write=False)
    weights.setflags(write=False)
    return HarmonicKernel(side, offsets, weights)


@lru_cache(maxsize=64)
def harmonic_kernel(side: int) -> HarmonicKernel:
    """Exit kernel of [v]_t for even side: v sits at offset s/2 from the low corner."""
    if side < 2 or side % 2:
        raise ParameterError(f"kernel side must be an even integer >= 2, got {side}")
    return exit_distribution(side, (side // 2, side // 2))


def _check_unclipped(geom: BoxGeometry, coords: np.ndarray, side: int):
    h = side // 2
    lo = coords - h + 1
    hi = coords + h
    if len(coords) and (lo.min() < 1 or hi.max() > geom.N):
        raise ParameterError("neighborhood [v]_alpha leaves V_N for some vertex of the region")


@dataclass(frozen=True)
class CoarseField:
    region: VertexSet
    values: np.ndarray
    alpha: float
    parent: FieldSample


def coarse_field(sample: FieldSample, alpha: float, region: VertexSet) -> CoarseField:
    """phi_[v]_alpha at every vertex of ``region``, in the region's iteration order."""
    if not 0 < alpha <= 1:
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha}")
    coords = region.coords
    if alpha == 1:
        return CoarseField(region, region.values(sample.values), alpha, sample)
    side = neighborhood_side(sample.geom.N, alpha)
    _check_unclipped(sample.geom, coords, side)
    ker = harmonic_kernel(side)
    P = sample.padded()
    x, y = coords[:, 0], coords[:, 1]
    acc = np.zeros(len(coords))
    for (dx, dy), w in zip(ker.offsets, ker.weights):
        acc += w * P[x + dx, y + dy]
    return CoarseField(region, acc, alpha, sample)


@dataclass(frozen=True)
class GeneralizedField:
    region: VertexSet
    values: np.ndarray
    coarse: np.ndarray
    fine: np.ndarray
    alpha: float
    sigma1: float
    sigma2: float
    rho: float

    def rebuild(self) -> np.ndarray:
        return self.sigma1 * self.coarse + self.sigma2 * self.fine


def psi_field(sample: FieldSample, alpha: float, sigma1: float, sigma2: float,
              rho: float) -> GeneralizedField:
    """psi = sigma1 * phi_[v]_alpha + sigma2 * (phi_v - phi_[v]_alpha) on A_{N,rho}."""
    if not 0 < rho < alpha < 1:
        raise ParameterError(f"need 0 < rho < alpha < 1, got rho={rho}, alpha={alpha}")
    if sigma1 < 0 or sigma2 < 0:
        raise ParameterError("sigma1 and sigma2 must be nonnegative")
    region = bulk_region(sample.geom, rho)
    coarse = coarse_field(sample, alpha, region).values
    fine = region.values(sample.values) - coarse
    values = sigma1 * coarse + sigma2 * fine
    return GeneralizedField(region, values, coarse, fine, alpha, sigma1, sigma2, rho)


# -- exact covariances --------------------------------------------------------

def _coarse_functional(geom: BoxGeometry, alpha: float, v):
    side = neighborhood_side(geom.N, alpha)
    if side < 2:
        raise ParameterError("alpha too close to 1: neighborhood is a single vertex")
    _check_unclipped(geom, np.array([v]), side)
    ker = harmonic_kernel(side)
    return np.asarray(v) + ker.offsets, ker.weights


def _fine_coefficients(geom: BoxGeometry, alpha: float, v) -> np.ndarray:
    pts, w = _coarse_functional(geom, alpha, v)
    pts = np.vstack([np.asarray(v)[None, :], pts])
    w = np.concatenate([[1.0], -w])
    return spectral_coefficients(geom.N, pts, w)


def residual_covariance(geom: BoxGeometry, alpha: float, v, w) -> float:
    """E[(phi_v - phi_[v]_alpha)(phi_w - phi_[w]_alpha)], exact.

    Each difference is a finite linear functional of the field, so the
    covariance is a single sum over the sine eigenbasis.
    """
    cv = _fine_coefficients(geom, alpha, v)
    cw = cv if tuple(v) == tuple(w) else _fine_coefficients(geom, alpha, w)
    return functional_covariance(geom.N, cv, cw)


def coarse_covariance(geom: BoxGeometry, alpha: float, v, w) -> float:
    """E[phi_[v]_alpha phi_[w]_alpha], exact."""
    pv, wv = _coarse_functional(geom, alpha, v)
    pw, ww = _coarse_functional(geom, alpha, w)
    return functional_covariance(geom.N, spectral_coefficients(geom.N, pv, wv),
                                 spectral_coefficients(geom.N, pw, ww))
