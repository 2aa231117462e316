"""Geometry of the box V_N = {1..N}^2 and the sub-regions used by the field code.

Vertices are 1-based pairs ``(x, y)``.  Arrays indexed by vertex use
``arr[x - 1, y - 1]``, so the linear index of ``(x, y)`` is
``(x - 1) * N + (y - 1)`` (row-major).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import ParameterError

# slack for float thresholds such as N**(1 - rho) that should be integers
_EPS = 1e-9


@dataclass(frozen=True)
class BoxGeometry:
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ParameterError(f"N must be a positive integer, got {self.N!r}")

    @property
    def n_vertices(self) -> int:
        return self.N * self.N

    def index(self, v) -> int:
        x, y = v
        if not self.contains(v):
            raise ParameterError(f"vertex {v} is not in V_{self.N}")
        return (x - 1) * self.N + (y - 1)

    def vertex(self, index: int) -> tuple[int, int]:
        if not 0 <= index < self.n_vertices:
            raise ParameterError(f"index {index} out of range")
        return index // self.N + 1, index % self.N + 1

    def contains(self, v) -> bool:
        x, y = v
        return 1 <= x <= self.N and 1 <= y <= self.N

    def boundary(self) -> list[tuple[int, int]]:
        """Outside vertices sharing an edge with V_N."""
        N = self.N
        out = []
        for k in range(1, N + 1):
            out += [(0, k), (N + 1, k), (k, 0), (k, N + 1)]
        return out

    def distance_to_boundary(self) -> np.ndarray:
        """Euclidean distance from each vertex to the nearest vertex of the boundary.

        The boundary consists of the four lines x=0, x=N+1, y=0, y=N+1
        (without corners), so the nearest point is reached along an axis.
        """
        k = np.arange(1, self.N + 1)
        d1 = np.minimum(k, self.N + 1 - k)
        return np.minimum.outer(d1, d1).astype(float)


class VertexSet:
    """Subset of V_N stored as a boolean mask; iteration is row-major."""

    def __init__(self, geom: BoxGeometry, mask: np.ndarray):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (geom.N, geom.N):
            raise ParameterError("mask shape does not match the geometry")
        mask = mask.copy()
        mask.setflags(write=False)
        self.geom = geom
        self.mask = mask
        coords = np.argwhere(mask) + 1
        coords.setflags(write=False)
        self.coords = coords

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        for x, y in self.coords:
            yield int(x), int(y)

    def __contains__(self, v) -> bool:
        return self.geom.contains(v) and bool(self.mask[v[0] - 1, v[1] - 1])

    def issubset(self, other: "VertexSet") -> bool:
        return bool(np.all(other.mask[self.mask]))

    def complement(self) -> "VertexSet":
        return VertexSet(self.geom, ~self.mask)

    def values(self, arr: np.ndarray) -> np.ndarray:
        """Entries of an N x N array at the member vertices, in iteration order."""
        return np.asarray(arr)[self.mask]

    def __repr__(self):
        return f"VertexSet(N={self.geom.N}, size={len(self)})"


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned rectangle [x0, x0+sx-1] x [y0, y0+sy-1] inside V_N."""

    x0: int
    y0: int
    sx: int
    sy: int
    geom: BoxGeometry = field(repr=False)
    clipped: bool = False

    def __contains__(self, v) -> bool:
        x, y = v
        return self.x0 <= x < self.x0 + self.sx and self.y0 <= y < self.y0 + self.sy

    def __len__(self) -> int:
        return self.sx * self.sy

    def vertices(self) -> list[tuple[int, int]]:
        return [(x, y) for x in range(self.x0, self.x0 + self.sx)
                for y in range(self.y0, self.y0 + self.sy)]

    def mask(self) -> np.ndarray:
        m = np.zeros((self.geom.N, self.geom.N), dtype=bool)
        m[self.x0 - 1:self.x0 - 1 + self.sx, self.y0 - 1:self.y0 - 1 + self.sy] = True
        return m


def even_side(length: float) -> int:
    """Nearest even integer to ``length``, at least 2 (halves round up)."""
    return max(2, 2 * math.floor(length / 2 + 0.5))


def inner_box(geom: BoxGeometry, delta: float) -> VertexSet:
    """V_N^delta: vertices at distance greater than delta*N from the boundary."""
    if not 0 <= delta < 0.5:
        raise ParameterError(f"delta must lie in [0, 1/2), got {delta}")
    d = geom.distance_to_boundary()
    return VertexSet(geom, d > delta * geom.N + _EPS)


def bulk_region(geom: BoxGeometry, rho: float) -> VertexSet:
    """A_{N,rho}: vertices at distance at least N^(1-rho) from the boundary."""
    if not 0 < rho < 1:
        raise ParameterError(f"rho must lie in (0, 1), got {rho}")
    d = geom.distance_to_boundary()
    return VertexSet(geom, d >= geom.N ** (1 - rho) - _EPS)


def neighborhood_side(N: int, t: float) -> int:
    if t >= 1:
        return 1
    return even_side(N ** (1 - t))


def neighborhood(geom: BoxGeometry, v, t: float) -> BoxRegion:
    """[v]_t: square of side ~N^(1-t) around v, clipped to V_N.

    For even side s the box spans offsets -s/2+1 .. s/2 from v in each
    coordinate; t = 1 gives the single vertex v.
    """
    if not geom.contains(v):
        raise ParameterError(f"vertex {v} is not in V_{geom.N}")
    if not 0 < t <= 1:
        raise ParameterError(f"t must lie in (0, 1], got {t}")
    x, y = v
    s = neighborhood_side(geom.N, t)
    if s == 1:
        return BoxRegion(x, y, 1, 1, geom)
    lo_x, hi_x = x - s // 2 + 1, x + s // 2
    lo_y, hi_y = y - s // 2 + 1, y + s // 2
    cx0, cx1 = max(lo_x, 1), min(hi_x, geom.N)
    cy0, cy1 = max(lo_y, 1), min(hi_y, geom.N)
    clipped = (cx0, cx1, cy0, cy1) != (lo_x, hi_x, lo_y, hi_y)
    return BoxRegion(cx0, cy0, cx1 - cx0 + 1, cy1 - cy0 + 1, geom, clipped)


def partition_boxes(geom: BoxGeometry, rho: float, alpha: float,
                    fraction: float = 0.25) -> list[BoxRegion]:
    """Tile A_{N,rho} with disjoint square boxes anchored at its lower-left corner.

    The box side is ``fraction`` of the side of [v]_alpha (at least 1).  Boxes
    in the last row/column are cut to fit A_{N,rho} and flagged ``clipped``.
    """
    if not 0 < rho < alpha < 1:
        raise ParameterError(f"need 0 < rho < alpha < 1, got rho={rho}, alpha={alpha}")
    if not 0 < fraction <= 1:
        raise ParameterError(f"fraction must lie in (0, 1], got {fraction}")
    region = bulk_region(geom, rho)
    if len(region) == 0:
        return []
    lo = region.coords.min(axis=0)
    hi = region.coords.max(axis=0)
    b = max(1, math.floor(fraction * neighborhood_side(geom.N, alpha)))
    boxes = []
    for x0 in range(lo[0], hi[0] + 1, b):
        for y0 in range(lo[1], hi[1] + 1, b):
            sx = min(b, hi[0] - x0 + 1)
            sy = min(b, hi[1] - y0 + 1)
            boxes.append(BoxRegion(int(x0), int(y0), int(sx), int(sy), geom,
                                   clipped=(sx, sy) != (b, b)))
    return boxes
