"""Gibbs measures e^{beta h_v}/Z over a region, free energies, high points."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ParameterError
from .lattice import BoxGeometry, VertexSet, bulk_region


def log_partition(values, beta: float) -> float:
    """log sum_v exp(beta * h_v), shifted by the maximum so it never overflows."""
    h = np.asarray(values, dtype=float).ravel()
    if h.size == 0:
        raise ParameterError("empty region")
    a = beta * h
    m = a.max()
    return float(m + math.log(np.exp(a - m).sum()))


def free_energy(values, beta: float, N: int) -> float:
    """Finite-N free energy log Z / log N^2."""
    if N <= 1:
        raise ParameterError("free energy needs N > 1")
    return log_partition(values, beta) / math.log(N * N)


class AliasTable:
    """Walker/Vose alias table: O(n) build, O(1) per draw."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        n = len(p)
        scaled = p * n / p.sum()
        prob = np.ones(n)
        alias = np.arange(n)
        small = list(np.flatnonzero(scaled < 1.0))
        large = list(np.flatnonzero(scaled >= 1.0))
        scaled = scaled.tolist()
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = scaled[g] + scaled[s] - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # leftovers are 1 up to round-off
        self.prob = prob
        self.alias = alias

    def draw(self, size, rng: np.random.Generator) -> np.ndarray:
        n = len(self.prob)
        i = rng.integers(0, n, size=size)
        keep = rng.random(size) < self.prob[i]
        return np.where(keep, i, self.alias[i])


class GibbsContext:
    """Normalized Gibbs weights of one disorder sample over a region."""

    def __init__(self, region: VertexSet, values, beta: float):
        if beta < 0:
            raise ParameterError("beta must be nonnegative")
        h = np.asarray(values, dtype=float).ravel()
        if len(h) != len(region):
            raise ParameterError("values do not match the region")
        if len(h) == 0:
            raise ParameterError("empty region")
        self.region = region
        self.values = h
        self.beta = beta
        a = beta * h
        m = a.max()
        w = np.exp(a - m)
        s = w.sum()
        self.log_Z = float(m + math.log(s))
        self.probs = w / s
        self._alias = None

    @classmethod
    def from_field(cls, field_values: np.ndarray, beta: float, region: VertexSet | None = None):
        field_values = np.asarray(field_values)
        if region is None:
            N = field_values.shape[0]
            region = VertexSet(BoxGeometry(N), np.ones((N, N), dtype=bool))
        return cls(region, region.values(field_values), beta)

    @property
    def alias(self) -> AliasTable:
        if self._alias is None:
            self._alias = AliasTable(self.probs)
        return self._alias

    def draw_indices(self, size, rng: np.random.Generator) -> np.ndarray:
        return self.alias.draw(size, rng)

    def average(self, observable) -> float:
        """Exact Gibbs average of a per-vertex observable by full summation."""
        return float(np.dot(self.probs, np.asarray(observable, dtype=float)))


@dataclass(frozen=True)
class ReplicaDraw:
    vertices: np.ndarray  # (s, 2)
    sample_id: int | None = None


def gibbs_sample(ctx: GibbsContext, s: int, count: int, seed,
                 sample_id: int | None = None) -> list[ReplicaDraw]:
    """``count`` independent draws of s replicas from the product Gibbs measure."""
    if count < 1 or s < 1:
        raise ParameterError("need count >= 1 and s >= 1")
    rng = np.random.default_rng(seed)
    idx = ctx.draw_indices((count, s), rng)
    coords = ctx.region.coords
    return [ReplicaDraw(coords[row], sample_id) for row in idx]


def boundary_mass(ctx: GibbsContext, rho: float) -> float:
    """Gibbs mass of the complement of A_{N,rho} under the current sample."""
    bulk = bulk_region(ctx.region.geom, rho)
    inside = bulk.mask[ctx.region.coords[:, 0] - 1, ctx.region.coords[:, 1] - 1]
    return float(min(1.0, max(0.0, ctx.probs[~inside].sum())))


@dataclass(frozen=True)
class HighPoints:
    count: int
    region_size: int
    threshold: float
    exponent: float | None  # None when the set is empty


def high_points_count(values, region: VertexSet, gamma: float, N: int) -> HighPoints:
    """Vertices of ``region`` with value >= gamma * sqrt(2/pi) * log N^2.

    ``values`` is either an N x N array or a per-vertex array in region order.
    """
    if gamma < 0:
        raise ParameterError("gamma must be nonnegative")
    h = np.asarray(values, dtype=float)
    if h.ndim == 2:
        h = region.values(h)
    L = math.log(N * N)
    thr = gamma * math.sqrt(2 / math.pi) * L
    c = int(np.count_nonzero(h >= thr))
    return HighPoints(c, len(region), thr, math.log(c) / L if c > 0 else None)
