"""Exact sampling of the DGFF on V_N and evaluation of its Green function.

The covariance is G = (I - Q)^{-1} with Q the adjacency matrix of V_N divided
by 4 (expected visits of the walk killed on leaving V_N).  I - Q is
diagonalized by the product sine basis

    e_{jk}(x, y) = s_j(x) s_k(y),  s_j(x) = sqrt(2/(N+1)) sin(pi j x/(N+1)),

with eigenvalues 1 - (cos(pi j/(N+1)) + cos(pi k/(N+1)))/2, so sampling and
Green columns both cost one pair of orthonormal DST-I transforms.
"""
from __future__ import annotations

import math
import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft, linalg

from . import ParameterError
from .lattice import BoxGeometry, inner_box

SAMPLER_VERSION = 1
SNAPSHOT_MAGIC = 0x46464744  # b"DGFF" little-endian
SNAPSHOT_VERSION = 1
EULER_GAMMA = 0.5772156649015329
DEFAULT_KAPPA = (2 * EULER_GAMMA + math.log(8)) / math.pi
DENSE_THRESHOLD = 32


@lru_cache(maxsize=32)
def eigenvalues(N: int) -> np.ndarray:
    """Eigenvalues of I - Q on V_N, indexed [j-1, k-1]."""
    c = np.cos(np.pi * np.arange(1, N + 1) / (N + 1))
    lam = 1.0 - 0.5 * (c[:, None] + c[None, :])
    lam.setflags(write=False)
    return lam


@lru_cache(maxsize=32)
def sine_basis(N: int) -> np.ndarray:
    """s_j(x) for j = 1..N (rows) and x = 0..N+1 (columns).

    Columns 0 and N+1 vanish, which is the Dirichlet condition on the
    boundary of V_N.
    """
    j = np.arange(1, N + 1)[:, None]
    x = np.arange(0, N + 2)[None, :]
    S = math.sqrt(2.0 / (N + 1)) * np.sin(np.pi * j * x / (N + 1))
    S[:, 0] = 0.0
    S[:, -1] = 0.0
    S.setflags(write=False)
    return S


def _dst2(a: np.ndarray) -> np.ndarray:
    return fft.dstn(a, type=1, norm="ortho", axes=(-2, -1))


@dataclass(frozen=True)
class FieldSample:
    geom: BoxGeometry
    values: np.ndarray
    seed: int | None = None
    sampler_version: int = SAMPLER_VERSION

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.geom.N, self.geom.N):
            raise ParameterError("field values do not match the geometry")
        if not np.all(np.isfinite(v)):
            raise ParameterError("field values must be finite")
        if v is self.values:
            v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def at(self, v) -> float:
        return float(self.values[v[0] - 1, v[1] - 1])

    def padded(self) -> np.ndarray:
        """Values on V_N plus its zero boundary, indexed [x, y] for x, y in 0..N+1."""
        out = np.zeros((self.geom.N + 2, self.geom.N + 2))
        out[1:-1, 1:-1] = self.values
        return out

    def scaled(self, c: float) -> "FieldSample":
        return FieldSample(self.geom, c * self.values, self.seed, self.sampler_version)


def sample_dgff(geom: BoxGeometry, seed: int) -> FieldSample:
    """One exact DGFF sample; bit-identical for identical (N, seed)."""
    N = geom.N
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((N, N))
    return FieldSample(geom, _dst2(g / np.sqrt(eigenvalues(N))), seed)


def sample_dgff_batch(geom: BoxGeometry, count: int, seed: int) -> np.ndarray:
    """``count`` independent samples stacked as a (count, N, N) array."""
    N = geom.N
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, N, N))
    return _dst2(g / np.sqrt(eigenvalues(N)))


@dataclass(frozen=True)
class GreenColumn:
    source: tuple[int, int]
    values: np.ndarray

    def at(self, u) -> float:
        return float(self.values[u[0] - 1, u[1] - 1])


def _solve_column(N: int, x: int, y: int) -> np.ndarray:
    e = np.zeros((N, N))
    e[x - 1, y - 1] = 1.0
    col = _dst2(_dst2(e) / eigenvalues(N))
    # exact solution is nonnegative; clear round-off far from the source
    np.maximum(col, 0.0, out=col)
    col.setflags(write=False)
    return col


class GreenProvider:
    """Green function of V_N with a bounded LRU cache of columns.

    Reads are lock-free; inserts and evictions are serialized.
    """

    def __init__(self, geom: BoxGeometry, capacity: int = 4096,
                 max_bytes: int = 512 * 2 ** 20):
        self.geom = geom
        col_bytes = 8 * geom.N * geom.N
        self.capacity = max(1, min(capacity, max_bytes // col_bytes))
        self._cache: OrderedDict[tuple[int, int], np.ndarray] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def column(self, v) -> GreenColumn:
        v = (int(v[0]), int(v[1]))
        if not self.geom.contains(v):
            raise ParameterError(f"vertex {v} is not in V_{self.geom.N}")
        col = self._cache.get(v)
        if col is not None:
            self.hits += 1
            with self._lock:
                if v in self._cache:
                    self._cache.move_to_end(v)
            return GreenColumn(v, col)
        self.misses += 1
        col = _solve_column(self.geom.N, *v)
        with self._lock:
            self._cache[v] = col
            while len(self._cache) > self.capacity:
                self._cache.popitem(last=False)
        return GreenColumn(v, col)

    def __call__(self, v, u) -> float:
        return self.column(v).at(u)

    def __len__(self) -> int:
        return len(self._cache)

    def pairs(self, vs: np.ndarray, us: np.ndarray) -> np.ndarray:
        """G(v_i, u_i) for arrays of 1-based vertices of shape (P, 2).

        Sources already in the column cache are read from it; everything else
        goes through the O(N)-per-pair mode sum.
        """
        vs = np.asarray(vs, dtype=np.int64).reshape(-1, 2)
        us = np.asarray(us, dtype=np.int64).reshape(-1, 2)
        if len(vs) == 0:
            return np.zeros(0)
        N = self.geom.N
        keys = (vs[:, 0] - 1) * N + (vs[:, 1] - 1)
        uniq, inv = np.unique(keys, return_inverse=True)
        cols = [self._cache.get((int(k) // N + 1, int(k) % N + 1)) for k in uniq]
        if all(c is not None for c in cols):
            self.hits += len(uniq)
            out = np.empty(len(vs))
            for i, col in enumerate(cols):
                sel = inv == i
                out[sel] = col[us[sel, 0] - 1, us[sel, 1] - 1]
            return out
        return green_pairs(N, vs, us)


@lru_cache(maxsize=32)
def _mode_rates(N: int) -> np.ndarray:
    # mu_j with cosh(mu_j) = 2 - cos(pi j/(N+1))
    return np.arccosh(2.0 - np.cos(np.pi * np.arange(1, N + 1) / (N + 1)))


def green_pairs(N: int, vs: np.ndarray, us: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """G(v_i, u_i) by expanding in x-modes only, O(N) per pair.

    For x-mode j the remaining operator in y is the tridiagonal matrix
    (1 - cos(theta_j)/2) I - T/4, whose inverse is known in closed form:
    4 sinh(mu a) sinh(mu (N+1-b)) / (sinh(mu) sinh(mu (N+1))) for a <= b.
    Coordinates may range over 0..N+1 (boundary values give 0).
    """
    vs = np.asarray(vs, dtype=np.int64).reshape(-1, 2)
    us = np.asarray(us, dtype=np.int64).reshape(-1, 2)
    S = sine_basis(N)
    mu = _mode_rates(N)[None, :]
    out = np.empty(len(vs))
    for s in range(0, len(vs), chunk):
        v, u = vs[s:s + chunk], us[s:s + chunk]
        a = np.minimum(v[:, 1], u[:, 1])[:, None]
        b = np.maximum(v[:, 1], u[:, 1])[:, None]
        # sinh(mu a) sinh(mu (N+1-b)) / sinh(mu (N+1)), written overflow-free
        g = (np.exp(mu * (a - b))
             * -np.expm1(-2 * mu * a) * -np.expm1(-2 * mu * (N + 1 - b))
             / (-2.0 * np.expm1(-2 * mu * (N + 1))))
        g *= 4.0 / np.sinh(mu)
        out[s:s + chunk] = np.einsum("pj,pj->p", S[:, v[:, 0]].T * S[:, u[:, 0]].T, g)
    return out


def spectral_pairs(N: int, vs: np.ndarray, us: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """G(v_i, u_i) from the full double eigen-expansion, O(N^2) per pair."""
    vs = np.asarray(vs, dtype=np.int64).reshape(-1, 2)
    us = np.asarray(us, dtype=np.int64).reshape(-1, 2)
    S = sine_basis(N)
    inv_lam = 1.0 / eigenvalues(N)
    out = np.empty(len(vs))
    for s in range(0, len(vs), chunk):
        v, u = vs[s:s + chunk], us[s:s + chunk]
        a = S[:, v[:, 0]].T * S[:, u[:, 0]].T
        b = S[:, v[:, 1]].T * S[:, u[:, 1]].T
        out[s:s + chunk] = np.einsum("pj,pj->p", a @ inv_lam, b)
    return out


@lru_cache(maxsize=16)
def _provider(N: int) -> GreenProvider:
    return GreenProvider(BoxGeometry(N))


def green_provider(geom: BoxGeometry) -> GreenProvider:
    """Process-wide shared provider for V_N."""
    return _provider(geom.N)


def green_column(geom: BoxGeometry, v) -> GreenColumn:
    """Column G_{V_N}(v, .) solving (I - Q) g = e_v, cached by source vertex."""
    return green_provider(geom).column(v)


def green_exact_small(geom: BoxGeometry, threshold: int = DENSE_THRESHOLD) -> np.ndarray:
    """Dense (I - Q)^{-1} by direct linear solve; test oracle for small N."""
    N = geom.N
    if N > threshold:
        raise ParameterError(f"dense Green matrix refused for N={N} > {threshold}")
    n = N * N
    M = np.eye(n)
    for x in range(N):
        for y in range(N):
            i = x * N + y
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = x + dx, y + dy
                if 0 <= a < N and 0 <= b < N:
                    M[i, a * N + b] -= 0.25
    G = linalg.solve(M, np.eye(n), assume_a="pos")
    return 0.5 * (G + G.T)


@dataclass(frozen=True)
class PotentialKernelValue:
    value: float
    kappa: float


def potential_kernel(v, w, kappa: float = DEFAULT_KAPPA) -> PotentialKernelValue:
    """Leading asymptotics (2/pi) log|v - w| + kappa of the potential kernel; 0 on the diagonal."""
    d = math.hypot(v[0] - w[0], v[1] - w[1])
    if d == 0:
        return PotentialKernelValue(0.0, kappa)
    return PotentialKernelValue(2.0 / math.pi * math.log(d) + kappa, kappa)


def green_diagonal(geom: BoxGeometry) -> np.ndarray:
    """G(v, v) for every v in V_N as an N x N array, O(N^3)."""
    N = geom.N
    A = sine_basis(N)[:, 1:-1].T ** 2  # A[x, j] = s_j(x)^2
    return A @ (1.0 / eigenvalues(N)) @ A.T


def variance_profile(geom: BoxGeometry, delta: float = 0.0) -> list[tuple[tuple[int, int], float]]:
    diag = green_diagonal(geom)
    return [(v, float(diag[v[0] - 1, v[1] - 1])) for v in inner_box(geom, delta)]


# -- linear functionals of the field ------------------------------------------

def spectral_coefficients(N: int, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """c_{jk} = sum_i w_i s_j(x_i) s_k(y_i) for points with coordinates in 0..N+1.

    The functional L = sum_i w_i phi_{p_i} has Var L = sum c_{jk}^2 / lambda_{jk}.
    """
    S = sine_basis(N)
    points = np.asarray(points, dtype=np.int64).reshape(-1, 2)
    return (S[:, points[:, 0]] * np.asarray(weights, float)) @ S[:, points[:, 1]].T


def functional_covariance(N: int, c1: np.ndarray, c2: np.ndarray) -> float:
    return float(np.sum(c1 * c2 / eigenvalues(N)))


# -- binary snapshots ---------------------------------------------------------

_HEADER = struct.Struct("<3qQ")
_NO_SEED = 2 ** 64 - 1


def snapshot_bytes(sample: FieldSample) -> bytes:
    """Header (magic, version, N as int64, seed as uint64) then N^2 float64, little-endian, row-major."""
    seed = _NO_SEED if sample.seed is None else int(sample.seed)
    head = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, sample.geom.N, seed)
    return head + np.ascontiguousarray(sample.values, dtype="<f8").tobytes()


def write_snapshot(sample: FieldSample, path) -> None:
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(sample))


def read_snapshot(path) -> FieldSample:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ParameterError("snapshot too short")
    magic, version, N, seed = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ParameterError("not a DGFF snapshot (bad magic)")
    if version != SNAPSHOT_VERSION:
        raise ParameterError(f"unsupported snapshot version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * N * N:
        raise ParameterError("snapshot body length does not match N")
    values = np.frombuffer(body, dtype="<f8").reshape(N, N).astype(float)
    return FieldSample(BoxGeometry(int(N)), values, None if seed == _NO_SEED else int(seed))
