"""Command-line front end: ``dgff-lab <subcommand> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical-check failure.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import ParameterError
from .closedform import FORMULAS
from .experiments import (ConfigError, ExperimentConfig, NumericalCheckError, load_config,
                          run_experiment)

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _csv_list(text: str) -> str:
    return text


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value experiment file; flags override it")
    p.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    p.add_argument("--workers", type=int, help="worker processes (DGFF_LAB_THREADS wins)")
    p.add_argument("--out", help="output directory")


def _field_flags(p, beta=True):
    p.add_argument("--N", dest="N", type=_csv_list, help="box sizes, comma separated")
    if beta:
        p.add_argument("--beta", type=_csv_list, help="inverse temperatures, comma separated")
    p.add_argument("--samples", dest="disorder_samples", type=int, help="disorder samples")
    p.add_argument("--snapshot-in", dest="snapshot_in", help="use a stored field instead of sampling")


def _two_scale(p):
    for k in ("alpha", "sigma1", "sigma2", "rho"):
        p.add_argument(f"--{k}", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dgff-lab", description="Discrete Gaussian free field simulation lab.")
    sub = ap.add_subparsers(dest="experiment", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="sample fields, summary CSV, optional binary snapshot")
    _common(p)
    _field_flags(p, beta=False)
    p.add_argument("--snapshot-out", dest="snapshot_out", help="write the first sample here")

    p = sub.add_parser("green", help="Green function column from the box center")
    _common(p)
    p.add_argument("--N", dest="N", type=_csv_list)

    p = sub.add_parser("free-energy", help="free energies per disorder sample")
    _common(p)
    _field_flags(p)
    _two_scale(p)
    p.add_argument("--restrict", action="store_const", const="true",
                   help="use the two-scale field on the bulk region even at sigma = (1, 1)")

    p = sub.add_parser("overlap", help="two-overlap distribution function")
    _common(p)
    _field_flags(p)
    p.add_argument("--rho", type=float)
    p.add_argument("--restrict", action="store_const", const="true",
                   help="Gibbs measure on the bulk region")
    p.add_argument("--pairs", dest="pairs_per_sample", type=int)
    p.add_argument("--r-points", dest="r_points", type=int)

    p = sub.add_parser("high-points", help="high-point counts and exponents")
    _common(p)
    _field_flags(p, beta=False)
    p.add_argument("--gamma", type=float)
    p.add_argument("--delta", type=float)

    p = sub.add_parser("boundary-mass", help="Gibbs mass outside the bulk region")
    _common(p)
    _field_flags(p)
    p.add_argument("--rho", type=float)

    p = sub.add_parser("bk-check", help="both Bovier-Kurkova identities per sample")
    _common(p)
    _field_flags(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--pairs", dest="pairs_per_sample", type=int)
    p.add_argument("--du", type=float)

    p = sub.add_parser("pd", help="Poisson-Dirichlet pair-coincidence moment")
    _common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--atoms", type=int)
    p.add_argument("--samples", dest="pd_samples", type=int)

    p = sub.add_parser("predict", help="evaluate a closed-form limit as JSON")
    _common(p)
    p.add_argument("formula", nargs="?", choices=FORMULAS)
    p.add_argument("--formula", dest="formula_flag", choices=FORMULAS)
    p.add_argument("--beta", type=_csv_list)
    _two_scale(p)
    for k in ("gamma", "r", "u", "sigma-sq"):
        p.add_argument(f"--{k}", dest=k.replace("-", "_"), type=float)
    p.add_argument("--side", choices=("+", "-"))

    p = sub.add_parser("grem-mc", help="two-level GREM free energies")
    _common(p)
    _field_flags(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--sigma1", type=float)
    p.add_argument("--sigma2", type=float)
    return ap


_NOT_CONFIG = {"config", "formula_flag"}


def config_from_args(args) -> ExperimentConfig:
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None}
    if getattr(args, "formula_flag", None):
        overrides["formula"] = args.formula_flag
    overrides = {k: str(v) if not isinstance(v, str) else v for k, v in overrides.items()}
    if args.experiment in ("predict", "pd") and "out" not in overrides:
        overrides["out"] = ""
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig.from_mapping(overrides)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as e:
        print(f"dgff-lab: invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"dgff-lab: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        manifest = run_experiment(cfg, args.workers)
    except NumericalCheckError as e:
        print(f"dgff-lab: {e}", file=sys.stderr)
        return EXIT_CHECK
    except ParameterError as e:
        print(f"dgff-lab: {e}", file=sys.stderr)
        return EXIT_USAGE
    if manifest.result is not None:
        print(json.dumps(manifest.result, sort_keys=True))
    else:
        for name, digest in manifest.outputs.items():
            print(f"{name}\t{digest}")
        if manifest.checks:
            print(json.dumps(manifest.checks, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
