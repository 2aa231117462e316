"""Poisson-Dirichlet PD(alpha) weights and replica moments of their atoms.

Atoms come from the arrival-time representation: with unit-rate Poisson
arrival times G_1 < G_2 < ..., the points G_i^(-1/alpha) form a Poisson
process of intensity proportional to s^(-alpha-1) ds, already decreasing.
Only K atoms are kept; the rest is accounted for by its conditional mean
integral_{G_K}^inf t^(-m/alpha) dt in every power sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ParameterError

_BATCH_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class PDWeights:
    alpha: float
    K: int
    weights: np.ndarray  # decreasing, sum <= 1
    tail_mass: float     # estimated normalized mass beyond the K-th atom

    @property
    def retained(self) -> float:
        return float(self.weights.sum())


def _check(alpha: float, K: int):
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if K < 1:
        raise ParameterError("K must be at least 1")


def _tail_integral(gamma_K: np.ndarray, power: float) -> np.ndarray:
    # integral_{G_K}^inf t^(-power) dt for power > 1
    return gamma_K ** (1 - power) / (power - 1)


def _raw_batch(alpha: float, K: int, count: int, rng: np.random.Generator):
    arrivals = np.cumsum(rng.standard_exponential((count, K)), axis=1)
    eta = arrivals ** (-1.0 / alpha)
    tail = _tail_integral(arrivals[:, -1], 1.0 / alpha)
    norm = eta.sum(axis=1) + tail
    return eta / norm[:, None], arrivals[:, -1], norm


def sample_pd(alpha: float, K: int, seed) -> PDWeights:
    _check(alpha, K)
    rng = np.random.default_rng(seed)
    xi, gK, norm = _raw_batch(alpha, K, 1, rng)
    tail = float(_tail_integral(gK, 1.0 / alpha)[0] / norm[0])
    w = xi[0]
    w.setflags(write=False)
    return PDWeights(alpha, K, w, tail)


def power_sum_batches(alpha: float, K: int, samples: int, powers, seed):
    """Yield arrays of shape (batch, len(powers)) of p_m = sum_k xi_k^m, tail included."""
    _check(alpha, K)
    rng = np.random.default_rng(seed)
    batch = max(1, _BATCH_ELEMENTS // K)
    done = 0
    while done < samples:
        n = min(batch, samples - done)
        xi, gK, norm = _raw_batch(alpha, K, n, rng)
        cols = []
        for m in powers:
            if m == 1:
                cols.append(np.ones(n))
                continue
            tail = _tail_integral(gK, m / alpha) / norm ** m
            cols.append(np.sum(xi ** m, axis=1) + tail)
        yield np.stack(cols, axis=1)
        done += n


# -- set partitions and replica patterns --------------------------------------

def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def pattern_matrix(blocks, s: int) -> np.ndarray:
    """delta_{k_l k_l'} for replicas grouped by ``blocks``."""
    label = np.empty(s, dtype=int)
    for b, block in enumerate(blocks):
        label[block] = b
    return label[:, None] == label[None, :]


def _distinct_sum_terms(sizes):
    """sum over distinct atoms k_1..k_r of prod xi_{k_b}^{m_b}, as (coeff, powers) terms.

    Mobius inversion over set partitions of the blocks.
    """
    terms = []
    for sigma in set_partitions(range(len(sizes))):
        coeff = 1
        powers = []
        for C in sigma:
            coeff *= (-1) ** (len(C) - 1) * math.factorial(len(C) - 1)
            powers.append(sum(sizes[b] for b in C))
        terms.append((coeff, powers))
    return terms


def _partition_plan(s: int, F):
    """Powers needed and, per replica partition with F != 0, (F value, Mobius terms)."""
    terms = []
    for p in set_partitions(range(s)):
        fv = float(F(pattern_matrix(p, s)))
        if fv != 0:
            terms.append((fv, _distinct_sum_terms([len(b) for b in p])))
    powers = sorted({m for _, ts in terms for _, pw in ts for m in pw} | {1})
    return powers, terms


def _evaluate_plan(plan, ps: np.ndarray) -> np.ndarray:
    powers, terms = plan
    col = {m: i for i, m in enumerate(powers)}
    total = np.zeros(len(ps))
    for fv, ts in terms:
        for coeff, pw in ts:
            total += fv * coeff * np.prod(ps[:, [col[m] for m in pw]], axis=1)
    return total


def replica_sum(weights, s: int, F) -> float:
    """sum_{k_1..k_s} w_{k_1}...w_{k_s} F(delta_{k_l k_l'}) for a finite weight vector."""
    w = np.asarray(weights, dtype=float)
    plan = _partition_plan(s, F)
    ps = np.array([[np.sum(w ** m) for m in plan[0]]])
    return float(_evaluate_plan(plan, ps)[0])


def pd_replica_moment(alpha: float, s: int, F, samples: int = 10_000, K: int = 10_000,
                      seed=0, method: str = "exact", return_stderr: bool = False):
    """E[ sum_{k_1..k_s} xi_{k_1}...xi_{k_s} F(delta_{k_l k_l'}) ] under PD(alpha).

    ``F`` maps the s x s boolean coincidence matrix to a number.  The exact
    method sums over set partitions of the replicas using power sums of the
    weights; the sampling method draws s atoms per weight sample instead.
    """
    if s < 2:
        raise ParameterError("need at least two replicas")
    if method == "sample":
        return _moment_by_sampling(alpha, s, F, samples, K, seed, return_stderr)
    if method != "exact":
        raise ParameterError(f"unknown method {method!r}")
    plan = _partition_plan(s, F)
    per_sample = [_evaluate_plan(plan, ps)
                  for ps in power_sum_batches(alpha, K, samples, plan[0], seed)]
    per_sample = np.concatenate(per_sample)
    mean = float(per_sample.mean())
    if return_stderr:
        return mean, float(per_sample.std(ddof=1) / math.sqrt(len(per_sample)))
    return mean


def _moment_by_sampling(alpha, s, F, samples, K, seed, return_stderr):
    rng = np.random.default_rng(seed)
    vals = np.empty(samples)
    for i in range(samples):
        w = sample_pd(alpha, K, rng.integers(2 ** 63)).weights
        p = np.append(w, max(0.0, 1.0 - w.sum()))
        idx = rng.choice(len(p), size=s, p=p / p.sum())
        # draws from the tail stand for distinct tiny atoms
        dust = idx == K
        idx = np.where(dust, K + np.arange(s), idx)
        vals[i] = float(F(idx[:, None] == idx[None, :]))
    mean = float(vals.mean())
    if return_stderr:
        return mean, float(vals.std(ddof=1) / math.sqrt(samples))
    return mean


def permuted(F, perm):
    """F composed with a relabelling of the replicas."""
    perm = np.asarray(perm)

    def G(pattern):
        return F(pattern[np.ix_(perm, perm)])
    return G


def pd_vs_field_overlap(beta: float, hist, samples: int = 20_000, K: int = 10_000,
                        seed=0, r_interior=(0.25, 0.5, 0.75)) -> dict:
    """Compare an overlap histogram with the one-step PD prediction at alpha = beta_c/beta."""
    from .closedform import BETA_C
    if beta <= BETA_C:
        raise ParameterError("comparison requires beta > beta_c")
    alpha = BETA_C / beta
    m2, m2_se = pd_replica_moment(alpha, 2, lambda d: float(d[0, 1]), samples, K, seed,
                                  return_stderr=True)
    rows = []
    for r in r_interior:
        x, se = hist.at(r)
        rows.append({"r": float(r), "x_field": x, "stderr": se, "target": alpha,
                     "discrepancy": x - alpha,
                     "z": (x - alpha) / se if se and se > 0 else None})
    return {"beta": beta, "alpha": alpha, "pair_coincidence": m2,
            "pair_coincidence_stderr": m2_se, "target_interior": alpha,
            "one_minus_target": 1 - alpha, "rows": rows}
