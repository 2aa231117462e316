"""Experiment configs, dispatch, atomic CSV/JSON output and run manifests."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import ParameterError, __version__
from .closedform import (FORMULA_INPUTS, Grem2Spec, SigmaPair, generalized_free_energy,
                         predict)
from .field import (BoxGeometry, FieldSample, green_column, green_exact_small, read_snapshot,
                    sample_dgff, snapshot_bytes)
from .gibbs import GibbsContext, boundary_mass, high_points_count, log_partition
from .lattice import bulk_region, inner_box
from .multiscale import psi_field
from .overlap import OverlapConfig, bk_derivative_identity, bk_integral_identity, \
    two_overlap_distribution
from .parallel import map_tasks, resolve_workers
from .pd import pd_replica_moment
from .seeding import derive_seed

EXPERIMENTS = ("sample", "green", "free-energy", "overlap", "high-points", "boundary-mass",
               "bk-check", "pd", "predict", "grem-mc")

ALIASES = {"bk-identities": "bk-check"}

SCHEMA_VERSION = 1
SCHEMAS = {
    "sample": ("N", "sample_id", "seed", "min", "max", "mean", "var"),
    "green": ("N", "source_x", "source_y", "x", "y", "G"),
    "free-energy": ("N", "beta", "alpha", "sigma1", "sigma2", "rho", "sample_id", "log_Z", "f_N"),
    "overlap": ("N", "beta", "rho", "r", "x_estimate", "stderr", "disorder_samples",
                "pairs_per_sample", "seed"),
    "high-points": ("N", "gamma", "delta", "sample_id", "count", "region_size", "threshold",
                    "exponent"),
    "boundary-mass": ("N", "beta", "rho", "sample_id", "boundary_mass"),
    "bk-check": ("N", "beta", "alpha", "rho", "sample_id", "integral_lhs", "integral_rhs",
                 "integral_diff", "derivative_lhs", "derivative_rhs", "derivative_diff"),
    "grem-mc": ("N", "beta", "alpha", "sigma1", "sigma2", "sample_id", "log_Z", "f_N",
                "prediction"),
}

INTEGRAL_TOL = 1e-12
DERIVATIVE_TOL = 1e-6
GREEN_TOL = 1e-9
U64 = 2 ** 64


class ConfigError(ParameterError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class NumericalCheckError(RuntimeError):
    """An identity or oracle comparison exceeded its tolerance."""


@dataclass
class ExperimentConfig:
    experiment: str = "predict"
    N: tuple = (64,)
    beta: tuple = (1.0,)
    alpha: float = 0.5
    sigma1: float = 1.0
    sigma2: float = 1.0
    rho: float = 0.25
    delta: float = 0.0
    gamma: float = 0.5
    restrict: bool = False  # Gibbs measure on A_{N,rho} instead of V_N
    disorder_samples: int = 10
    pairs_per_sample: int = 10_000
    r_points: int = 101
    atoms: int = 10_000
    pd_samples: int = 10_000
    formula: str = "gff_free_energy"
    r: float = 0.5
    u: float = 0.0
    side: str = "+"
    sigma_sq: float = 1.0
    du: float = 1e-4
    seed: int = 0
    workers: int = 1
    out: str = "out"
    snapshot_in: str = ""
    snapshot_out: str = ""

    def __post_init__(self):
        self.experiment = ALIASES.get(self.experiment, self.experiment)
        self.N = tuple(int(n) for n in np.atleast_1d(self.N))
        self.beta = tuple(float(b) for b in np.atleast_1d(self.beta))
        self.validate()

    def validate(self):
        def need(ok, key, msg):
            if not ok:
                raise ConfigError(key, msg)
        need(self.experiment in EXPERIMENTS, "experiment", f"unknown experiment {self.experiment!r}")
        need(len(self.N) > 0 and all(n >= 4 for n in self.N), "N", "every N must be >= 4")
        need(len(self.beta) > 0 and all(b >= 0 and math.isfinite(b) for b in self.beta),
             "beta", "every beta must be finite and >= 0")
        need(0 < self.alpha < 1, "alpha", "must lie in (0, 1)")
        need(0 < self.rho < self.alpha, "rho", "need 0 < rho < alpha")
        need(0 <= self.delta < 0.5, "delta", "must lie in [0, 0.5)")
        need(self.sigma1 >= 0, "sigma1", "must be >= 0")
        need(self.sigma2 >= 0, "sigma2", "must be >= 0")
        need(self.gamma >= 0, "gamma", "must be >= 0")
        need(self.disorder_samples >= 1, "disorder_samples", "must be >= 1")
        need(self.pairs_per_sample >= 1, "pairs_per_sample", "must be >= 1")
        need(self.r_points >= 2, "r_points", "must be >= 2")
        need(self.atoms >= 1, "atoms", "must be >= 1")
        need(self.pd_samples >= 2, "pd_samples", "must be >= 2")
        need(self.formula in FORMULA_INPUTS, "formula", f"unknown formula {self.formula!r}")
        need(0 <= self.r <= 1, "r", "must lie in [0, 1]")
        need(self.side in ("+", "-"), "side", "must be '+' or '-'")
        need(self.du > 0, "du", "must be positive")
        need(0 <= self.seed < U64, "seed", "must be an unsigned 64-bit integer")
        need(self.workers >= 1, "workers", "must be >= 1")

    # -- key = value text form --

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, **overrides) -> "ExperimentConfig":
        raw = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}", "expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            raw[k] = v
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in raw.items():
            if k not in kinds:
                raise ConfigError(k, "unknown key")
            try:
                kw[k] = _coerce(kinds[k], v)
            except (TypeError, ValueError) as e:
                raise ConfigError(k, f"cannot parse {v!r}: {e}") from None
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}


def _coerce(kind: str, v):
    if not isinstance(v, str):
        if kind == "bool":
            return bool(v)
        return v
    if kind == "tuple":
        return tuple(float(x) for x in v.split(",") if x.strip())
    if kind == "int":
        return int(v)
    if kind == "float":
        return float(v)
    if kind == "bool":
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    return v


def load_config(path, **overrides) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.loads(fh.read(), **overrides)


@dataclass
class RunManifest:
    config: dict
    version: str
    schema_version: int
    seeds: dict
    wall_clock: float
    outputs: dict = field(default_factory=dict)  # file name -> sha256
    checks: dict = field(default_factory=dict)
    result: object = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


# -- atomic output ------------------------------------------------------------

def atomic_write(path: str, data: bytes) -> str:
    """Write through a temp file in the target directory and rename; returns the sha256."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_bytes(columns, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue().encode()


# -- per-task workers (module level so they pickle) -----------------------------

def _field_for(cfg: ExperimentConfig, N: int, d: int) -> FieldSample:
    if cfg.snapshot_in:
        return read_snapshot(cfg.snapshot_in)
    return sample_dgff(BoxGeometry(N), derive_seed(cfg.seed, d, "field"))


def _task_sample(cfg, N, d):
    phi = _field_for(cfg, N, d)
    v = phi.values
    return [{"N": N, "sample_id": d, "seed": phi.seed, "min": v.min(), "max": v.max(),
             "mean": v.mean(), "var": v.var()}]


def _task_free_energy(cfg, N, beta, d):
    phi = _field_for(cfg, N, d)
    N = phi.geom.N
    generalized = cfg.restrict or (cfg.sigma1, cfg.sigma2) != (1.0, 1.0)
    if generalized:
        h = psi_field(phi, cfg.alpha, cfg.sigma1, cfg.sigma2, cfg.rho).values
    else:
        h = phi.values
    logZ = log_partition(h, beta)
    return [{"N": N, "beta": beta, "alpha": cfg.alpha if generalized else None,
             "sigma1": cfg.sigma1, "sigma2": cfg.sigma2, "rho": cfg.rho if generalized else None,
             "sample_id": d, "log_Z": logZ, "f_N": logZ / math.log(N * N)}]


def _task_high_points(cfg, N, d):
    phi = _field_for(cfg, N, d)
    N = phi.geom.N
    hp = high_points_count(phi.values, inner_box(phi.geom, cfg.delta), cfg.gamma, N)
    return [{"N": N, "gamma": cfg.gamma, "delta": cfg.delta, "sample_id": d, "count": hp.count,
             "region_size": hp.region_size, "threshold": hp.threshold,
             "exponent": "absent" if hp.exponent is None else hp.exponent}]


def _task_boundary_mass(cfg, N, beta, d):
    phi = _field_for(cfg, N, d)
    ctx = GibbsContext.from_field(phi.values, beta)
    return [{"N": phi.geom.N, "beta": beta, "rho": cfg.rho, "sample_id": d,
             "boundary_mass": boundary_mass(ctx, cfg.rho)}]


def _task_bk(cfg, N, beta, d):
    phi = _field_for(cfg, N, d)
    il, ir, idiff = bk_integral_identity(phi, beta, cfg.rho, cfg.alpha, cfg.pairs_per_sample,
                                         derive_seed(cfg.seed, d, "pairs"))
    dl, dr, ddiff = bk_derivative_identity(phi, beta, cfg.rho, cfg.alpha, cfg.du)
    return [{"N": phi.geom.N, "beta": beta, "alpha": cfg.alpha, "rho": cfg.rho, "sample_id": d,
             "integral_lhs": il, "integral_rhs": ir, "integral_diff": idiff,
             "derivative_lhs": dl, "derivative_rhs": dr, "derivative_diff": ddiff}]


def _task_grem(cfg, N, beta, d):
    from .closedform import sample_grem2
    sp = SigmaPair(cfg.sigma1, cfg.sigma2, cfg.alpha)
    leaves = sample_grem2(Grem2Spec.scaled(N, sp), derive_seed(cfg.seed, d, "grem"))
    logZ = log_partition(leaves, beta)
    return [{"N": N, "beta": beta, "alpha": cfg.alpha, "sigma1": cfg.sigma1,
             "sigma2": cfg.sigma2, "sample_id": d, "log_Z": logZ,
             "f_N": logZ / math.log(N * N), "prediction": generalized_free_energy(beta, sp)}]


def _disorder_ids(cfg):
    return [0] if cfg.snapshot_in else list(range(cfg.disorder_samples))


def _grid(cfg, with_beta: bool):
    Ns = cfg.N[:1] if cfg.snapshot_in else cfg.N
    if with_beta:
        return [(cfg, N, b, d) for N in Ns for b in cfg.beta for d in _disorder_ids(cfg)]
    return [(cfg, N, d) for N in Ns for d in _disorder_ids(cfg)]


def _flatten(chunks):
    return [row for chunk in chunks for row in chunk]


# -- dispatch -------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> RunManifest:
    """Run the configured experiment and write its outputs atomically under cfg.out.

    Raises NumericalCheckError after writing when an identity check fails.
    """
    cfg.validate()
    workers = resolve_workers(workers or cfg.workers)
    t0 = time.perf_counter()
    name = cfg.experiment
    outputs: dict[str, bytes] = {}
    checks: dict = {}
    result = None
    seeds = {}
    if name in ("sample", "free-energy", "high-points", "boundary-mass", "bk-check", "overlap"):
        seeds = {f"field:{d}": derive_seed(cfg.seed, d, "field") for d in _disorder_ids(cfg)}
        if name in ("bk-check", "overlap"):
            seeds.update({f"pairs:{d}": derive_seed(cfg.seed, d, "pairs")
                          for d in _disorder_ids(cfg)})
    elif name == "grem-mc":
        seeds = {f"grem:{d}": derive_seed(cfg.seed, d, "grem") for d in _disorder_ids(cfg)}

    if name == "sample":
        rows = _flatten(map_tasks(_task_sample, _grid(cfg, False), workers))
        outputs["sample.csv"] = csv_bytes(SCHEMAS[name], rows)
        if cfg.snapshot_out:
            atomic_write(cfg.snapshot_out, snapshot_bytes(_field_for(cfg, cfg.N[0], 0)))
    elif name == "green":
        rows = []
        worst = 0.0
        for N in cfg.N:
            geom = BoxGeometry(N)
            c = (N + 1) // 2
            col = green_column(geom, (c, c)).values
            if N <= 32:
                worst = max(worst, float(np.abs(green_exact_small(geom)[geom.index((c, c))]
                                                - col.ravel()).max()))
            for x in range(1, N + 1):
                for y in range(1, N + 1):
                    rows.append({"N": N, "source_x": c, "source_y": c, "x": x, "y": y,
                                 "G": col[x - 1, y - 1]})
        checks["green_dense_max_abs_diff"] = worst
        checks["green_ok"] = worst < GREEN_TOL
        outputs["green.csv"] = csv_bytes(SCHEMAS[name], rows)
    elif name == "free-energy":
        rows = _flatten(map_tasks(_task_free_energy, _grid(cfg, True), workers))
        outputs["free_energy.csv"] = csv_bytes(SCHEMAS[name], rows)
    elif name == "high-points":
        rows = _flatten(map_tasks(_task_high_points, _grid(cfg, False), workers))
        outputs["high_points.csv"] = csv_bytes(SCHEMAS[name], rows)
    elif name == "boundary-mass":
        rows = _flatten(map_tasks(_task_boundary_mass, _grid(cfg, True), workers))
        outputs["boundary_mass.csv"] = csv_bytes(SCHEMAS[name], rows)
    elif name == "bk-check":
        rows = _flatten(map_tasks(_task_bk, _grid(cfg, True), workers))
        checks["integral_max_abs_diff"] = max(abs(r["integral_diff"]) for r in rows)
        checks["derivative_max_abs_diff"] = max(abs(r["derivative_diff"]) for r in rows)
        checks["bk_ok"] = (checks["integral_max_abs_diff"] < INTEGRAL_TOL
                           and checks["derivative_max_abs_diff"] < DERIVATIVE_TOL)
        outputs["bk_check.csv"] = csv_bytes(SCHEMAS[name], rows)
    elif name == "overlap":
        rows = []
        r_grid = np.linspace(0.0, 1.0, cfg.r_points)
        for N in cfg.N:
            for b in cfg.beta:
                oc = OverlapConfig(N, b, cfg.rho if cfg.restrict else None, cfg.disorder_samples,
                                   cfg.pairs_per_sample, cfg.seed, r_grid)
                h = two_overlap_distribution(oc, workers=workers)
                for r, x, se in zip(h.r, h.x, h.stderr):
                    rows.append({"N": N, "beta": b, "rho": cfg.rho if cfg.restrict else None,
                                 "r": r, "x_estimate": x, "stderr": se,
                                 "disorder_samples": h.disorder_samples,
                                 "pairs_per_sample": h.pairs_per_sample, "seed": cfg.seed})
        outputs["overlap.csv"] = csv_bytes(SCHEMAS[name], rows)
    elif name == "grem-mc":
        rows = _flatten(map_tasks(_task_grem, _grid(cfg, True), workers))
        outputs["grem_mc.csv"] = csv_bytes(SCHEMAS[name], rows)
    elif name == "pd":
        m2, se = pd_replica_moment(cfg.alpha, 2, _coincide, cfg.pd_samples, cfg.atoms, cfg.seed,
                                   return_stderr=True)
        result = {"alpha": cfg.alpha, "moment2": m2, "stderr": se, "samples": cfg.pd_samples}
        outputs["pd.json"] = (json.dumps(result, sort_keys=True) + "\n").encode()
    elif name == "predict":
        result = predict(cfg.formula, **predict_inputs(cfg))
        outputs["predict.json"] = (json.dumps(result, sort_keys=True) + "\n").encode()

    # an empty out directory means "compute only"
    if cfg.out:
        sums = {fn: atomic_write(os.path.join(cfg.out, fn), data) for fn, data in outputs.items()}
    else:
        sums = {fn: hashlib.sha256(data).hexdigest() for fn, data in outputs.items()}
    manifest = RunManifest(cfg.to_dict(), __version__, SCHEMA_VERSION, seeds,
                           time.perf_counter() - t0, sums, checks, result)
    if cfg.out:
        atomic_write(os.path.join(cfg.out, "manifest.json"), manifest.to_json().encode())
    failed = [k for k, v in checks.items() if k.endswith("_ok") and not v]
    if failed:
        raise NumericalCheckError(f"numerical check failed: {', '.join(failed)} {checks}")
    return manifest


def _coincide(pattern):
    return float(pattern[0, 1])


def predict_inputs(cfg: ExperimentConfig) -> dict:
    values = {"beta": cfg.beta[0], "alpha": cfg.alpha, "sigma1": cfg.sigma1,
              "sigma2": cfg.sigma2, "gamma": cfg.gamma, "r": cfg.r, "u": cfg.u,
              "side": cfg.side, "sigma_sq": cfg.sigma_sq}
    return {k: values[k] for k in FORMULA_INPUTS[cfg.formula]}
