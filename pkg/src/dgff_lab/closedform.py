"""Closed-form N -> infinity limits, and a two-level GREM sampler to test them.

Normalization throughout: the bulk variance is (1/pi) log N^2 and the
critical inverse temperature of the field is sqrt(2 pi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ParameterError

BETA_C = math.sqrt(2 * math.pi)
SQRT_2_OVER_PI = math.sqrt(2 / math.pi)


@dataclass(frozen=True)
class SigmaPair:
    sigma1: float
    sigma2: float
    alpha: float

    def __post_init__(self):
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ParameterError("sigma1 and sigma2 must be nonnegative")
        if not 0 < self.alpha < 1:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def V12(self) -> float:
        return self.sigma1 ** 2 * self.alpha + self.sigma2 ** 2 * (1 - self.alpha)

    @property
    def hierarchical(self) -> bool:
        """True on the sigma1 >= sigma2 side, where the two levels decouple."""
        return self.sigma1 >= self.sigma2


def _rem(beta: float, sigma_sq: float) -> float:
    # sigma_sq == 0 is the degenerate REM with free energy 1
    if sigma_sq == 0:
        return 1.0
    sigma = math.sqrt(sigma_sq)
    if beta <= BETA_C / sigma:
        return 1 + beta ** 2 * sigma_sq / (2 * math.pi)
    return SQRT_2_OVER_PI * sigma * beta


def gff_free_energy(beta: float) -> float:
    """1 + beta^2/(2 pi) up to beta_c = sqrt(2 pi), then sqrt(2/pi) beta."""
    if beta < 0:
        raise ParameterError("beta must be nonnegative")
    return _rem(beta, 1.0)


def rem_free_energy(beta: float, sigma_sq: float) -> float:
    """Free energy of N^2 i.i.d. Gaussians of variance (sigma^2/pi) log N^2."""
    if beta < 0:
        raise ParameterError("beta must be nonnegative")
    if sigma_sq <= 0:
        raise ParameterError("sigma_sq must be positive")
    return _rem(beta, sigma_sq)


def generalized_free_energy(beta: float, sp: SigmaPair) -> float:
    if beta < 0:
        raise ParameterError("beta must be nonnegative")
    if sp.sigma1 <= sp.sigma2:
        return _rem(beta, sp.V12)
    a = sp.alpha
    return a * _rem(beta, sp.sigma1 ** 2) + (1 - a) * _rem(beta, sp.sigma2 ** 2)


def overlap_limit(beta: float, r: float) -> float:
    """Limiting two-overlap distribution at r in [0, 1].

    Above beta_c: beta_c/beta for r < 1 and 1 at r = 1.  At or below beta_c
    all overlap mass sits at 0, so the distribution function is 1.
    """
    if not 0 <= r <= 1:
        raise ParameterError("r must lie in [0, 1]")
    if beta <= BETA_C:
        return 1.0
    return 1.0 if r >= 1 else BETA_C / beta


def overlap_regime(beta: float) -> str:
    return "low-temperature" if beta > BETA_C else "high-temperature"


def gamma_max(sp: SigmaPair) -> float:
    if sp.sigma1 <= sp.sigma2:
        return math.sqrt(sp.V12)
    return sp.sigma1 * sp.alpha + sp.sigma2 * (1 - sp.alpha)


def gamma_crit(sp: SigmaPair) -> float:
    """Where the high-point exponent switches branch (infinite when sigma1 = 0)."""
    return sp.V12 / sp.sigma1 if sp.sigma1 > 0 else math.inf


def _exponent(gamma: float, sp: SigmaPair) -> float:
    if sp.sigma1 <= sp.sigma2 or gamma < gamma_crit(sp):
        return 1 - gamma ** 2 / sp.V12
    a = sp.alpha
    return (1 - a) - (gamma - sp.sigma1 * a) ** 2 / (sp.sigma2 ** 2 * (1 - a))


def highpoint_exponent(gamma: float, sp: SigmaPair) -> float:
    """Limiting log-count exponent of gamma-high points of the two-scale field."""
    if gamma < 0:
        raise ParameterError("gamma must be nonnegative")
    if gamma >= gamma_max(sp):
        raise ParameterError(f"gamma={gamma} is not below gamma_max={gamma_max(sp)}")
    return _exponent(gamma, sp)


def free_energy_u_derivative(beta: float, alpha: float, side: str = "+", u: float = 0.0) -> float:
    """One-sided value of (pi/beta^2) d/du of the limit free energy at sigma = (1, 1+u).

    Valid in the frozen regime, where both sides of u = 0 are supercritical.
    """
    if side not in ("+", "-"):
        raise ParameterError("side must be '+' or '-'")
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    s2 = 1 + u
    if s2 <= 0:
        raise ParameterError("need 1 + u > 0")
    if side == "+" and u < 0 or side == "-" and u > 0:
        raise ParameterError("side does not match the sign of u")
    if side == "+":
        v12 = alpha + (1 - alpha) * s2 ** 2
        if beta <= BETA_C / math.sqrt(v12):
            raise ParameterError("beta is not above the critical value on the + side")
        return BETA_C / beta * (1 - alpha) * s2 / math.sqrt(v12)
    if beta <= BETA_C / s2:
        raise ParameterError("beta is not above the critical value on the - side")
    return BETA_C / beta * (1 - alpha)


def exponent_curve_max(beta: float, sp: SigmaPair) -> tuple[float, float]:
    """(argmax, max) over [0, gamma_max] of E(gamma) + sqrt(2/pi) beta gamma.

    Candidates are the interval ends, the branch switch and the clipped
    stationary point of each quadratic branch; a grid guards against misses.
    """
    gmax = gamma_max(sp)
    gc = gamma_crit(sp)

    def P(g):
        return _exponent(g, sp) + SQRT_2_OVER_PI * beta * g

    cands = [0.0, gmax]
    hi1 = min(gc, gmax)
    cands.append(min(max(beta * sp.V12 / BETA_C, 0.0), hi1))
    if sp.sigma1 > sp.sigma2 and gc < gmax:
        cands.append(gc)
        stat = sp.sigma1 * sp.alpha + beta * sp.sigma2 ** 2 * (1 - sp.alpha) / BETA_C
        cands.append(min(max(stat, gc), gmax))
    grid = np.linspace(0.0, gmax, 2001)
    best = max(cands, key=P)
    g_grid = float(grid[int(np.argmax([P(g) for g in grid]))])
    if P(g_grid) > P(best):
        best = g_grid
    return float(best), float(P(best))


# -- two-level GREM -----------------------------------------------------------

@dataclass(frozen=True)
class Grem2Spec:
    K1: int      # first-level blocks
    K2: int      # leaves per block
    var1: float  # first-level variance
    var2: float  # second-level variance

    def __post_init__(self):
        if self.K1 < 1 or self.K2 < 1:
            raise ParameterError("branch counts must be positive")
        if self.var1 <= 0 or self.var2 <= 0:
            raise ParameterError("variances must be positive")

    @classmethod
    def scaled(cls, N: int, sp: SigmaPair) -> "Grem2Spec":
        """N^(2 alpha) blocks of N^(2(1-alpha)) leaves with the field's scale-split variances."""
        L = math.log(N * N)
        K1 = max(1, round(N ** (2 * sp.alpha)))
        K2 = max(1, round(N * N / K1))
        return cls(K1, K2, sp.sigma1 ** 2 * sp.alpha / math.pi * L,
                   sp.sigma2 ** 2 * (1 - sp.alpha) / math.pi * L)


def sample_grem2(spec: Grem2Spec, seed) -> np.ndarray:
    """Leaf values g1[block] + g2[leaf] as a (K1, K2) array."""
    rng = np.random.default_rng(seed)
    g1 = rng.normal(0.0, math.sqrt(spec.var1), size=(spec.K1, 1))
    g2 = rng.normal(0.0, math.sqrt(spec.var2), size=(spec.K1, spec.K2))
    return g1 + g2


# -- JSON-ready predictions ---------------------------------------------------

def _sp(inputs) -> SigmaPair:
    return SigmaPair(float(inputs["sigma1"]), float(inputs["sigma2"]), float(inputs["alpha"]))


def predict(formula: str, **inputs) -> dict:
    """Evaluate a closed form by name: {formula, inputs, value, branch}."""
    beta = float(inputs.get("beta", 0.0))
    if formula == "gff_free_energy":
        value = gff_free_energy(beta)
        branch = "high-temperature" if beta <= BETA_C else "frozen"
    elif formula == "rem_free_energy":
        s2 = float(inputs["sigma_sq"])
        value = rem_free_energy(beta, s2)
        branch = "high-temperature" if beta <= BETA_C / math.sqrt(s2) else "frozen"
    elif formula == "generalized_free_energy":
        sp = _sp(inputs)
        value = generalized_free_energy(beta, sp)
        branch = "grem" if sp.sigma1 > sp.sigma2 else "rem"
    elif formula == "overlap_limit":
        value = overlap_limit(beta, float(inputs["r"]))
        branch = overlap_regime(beta)
    elif formula == "gamma_max":
        sp = _sp(inputs)
        value = gamma_max(sp)
        branch = "grem" if sp.sigma1 > sp.sigma2 else "rem"
    elif formula == "highpoint_exponent":
        sp = _sp(inputs)
        g = float(inputs["gamma"])
        value = highpoint_exponent(g, sp)
        branch = "upper" if sp.sigma1 > sp.sigma2 and g >= gamma_crit(sp) else "lower"
    elif formula == "free_energy_u_derivative":
        side = str(inputs.get("side", "+"))
        value = free_energy_u_derivative(beta, float(inputs["alpha"]), side,
                                         float(inputs.get("u", 0.0)))
        branch = side
    elif formula == "exponent_curve_max":
        sp = _sp(inputs)
        arg, value = exponent_curve_max(beta, sp)
        inputs = dict(inputs, argmax=arg)
        branch = "grem" if sp.sigma1 > sp.sigma2 else "rem"
    else:
        raise ParameterError(f"unknown formula {formula!r}")
    return {"formula": formula, "inputs": inputs, "value": value, "branch": branch}


FORMULA_INPUTS = {
    "gff_free_energy": ("beta",),
    "rem_free_energy": ("beta", "sigma_sq"),
    "generalized_free_energy": ("beta", "alpha", "sigma1", "sigma2"),
    "overlap_limit": ("beta", "r"),
    "gamma_max": ("alpha", "sigma1", "sigma2"),
    "highpoint_exponent": ("gamma", "alpha", "sigma1", "sigma2"),
    "free_energy_u_derivative": ("beta", "alpha", "side", "u"),
    "exponent_curve_max": ("beta", "alpha", "sigma1", "sigma2"),
}
FORMULAS = tuple(FORMULA_INPUTS)
