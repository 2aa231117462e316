"""Independent reference computations used only by the tests.

None of these touch the sine-transform machinery of the package: Green
functions come from an explicit dense inverse or from simulated walks, exit
laws from a direct Dirichlet solve, conditional means from Gaussian
conditioning, PD weights from stick-breaking.
"""
import itertools

import numpy as np
from scipy.integrate import trapezoid

STEPS = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)])


def laplacian_matrix(N):
    """I - Q on {1..N}^2, row-major vertex order."""
    n = N * N
    M = np.eye(n)
    for x in range(N):
        for y in range(N):
            i = x * N + y
            for dx, dy in STEPS:
                a, b = x + dx, y + dy
                if 0 <= a < N and 0 <= b < N:
                    M[i, a * N + b] -= 0.25
    return M


def dense_green(N):
    return np.linalg.inv(laplacian_matrix(N))


def simulate_walks(N, start, walks, rng, max_steps=10**6):
    """Visit counts per vertex (averaged) and mean exit time for walks killed on leaving {1..N}^2."""
    pos = np.tile(np.asarray(start), (walks, 1))
    alive = np.ones(walks, dtype=bool)
    visits = np.zeros((N, N))
    steps = np.zeros(walks)
    for _ in range(max_steps):
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            break
        np.add.at(visits, (pos[idx, 0] - 1, pos[idx, 1] - 1), 1)
        steps[idx] += 1
        pos[idx] += STEPS[rng.integers(0, 4, len(idx))]
        p = pos[idx]
        out = (p[:, 0] < 1) | (p[:, 0] > N) | (p[:, 1] < 1) | (p[:, 1] > N)
        alive[idx[out]] = False
    return visits / walks, steps.mean(), pos


def exit_law_dirichlet(side, start):
    """{offset from start: P_start(walk leaves the box at that outside vertex)} by a dense solve."""
    M = laplacian_matrix(side)
    ring = [(0, k) for k in range(1, side + 1)] + [(side + 1, k) for k in range(1, side + 1)] \
        + [(k, 0) for k in range(1, side + 1)] + [(k, side + 1) for k in range(1, side + 1)]
    R = np.zeros((side * side, len(ring)))
    for j, (a, b) in enumerate(ring):
        for dx, dy in STEPS:
            x, y = a + dx, b + dy
            if 1 <= x <= side and 1 <= y <= side:
                R[(x - 1) * side + (y - 1), j] += 0.25
    H = np.linalg.solve(M, R)
    i = (start[0] - 1) * side + (start[1] - 1)
    return {(a - start[0], b - start[1]): H[i, j] for j, (a, b) in enumerate(ring)}


def conditional_mean(G, N, v, box_lo, box_hi, phi):
    """E[phi_v | phi outside the box [box_lo, box_hi]^2] by Gaussian conditioning."""
    xs, ys = np.meshgrid(np.arange(1, N + 1), np.arange(1, N + 1), indexing="ij")
    inside = (xs >= box_lo[0]) & (xs <= box_hi[0]) & (ys >= box_lo[1]) & (ys <= box_hi[1])
    out = np.flatnonzero(~inside.ravel())
    i = (v[0] - 1) * N + (v[1] - 1)
    coef = np.linalg.solve(G[np.ix_(out, out)], G[out, i])
    return float(coef @ phi.ravel()[out])


def gem_weights(alpha, K, rng):
    """First K weights of PD(alpha, 0) in size-biased order by stick-breaking."""
    i = np.arange(1, K + 1)
    V = rng.beta(1 - alpha, i * alpha)
    left = np.concatenate([[1.0], np.cumprod(1 - V)[:-1]])
    return V * left


def brute_replica_sum(w, s, F):
    w = np.asarray(w)
    total = 0.0
    for k in itertools.product(range(len(w)), repeat=s):
        k = np.array(k)
        total += np.prod(w[k]) * F(k[:, None] == k[None, :])
    return total


def quadrature_cdf_integral(q, alpha, points=200001):
    """Trapezoid integral over [alpha, 1] of r -> mean(q <= r) on a fine grid."""
    r = np.linspace(alpha, 1, points)
    qs = np.sort(q)
    x = np.searchsorted(qs, r, side="right") / len(qs)
    return float(trapezoid(x, r))
