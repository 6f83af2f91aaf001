"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 numeric failure, 4 infeasible
simulation.  The seed comes from ``--seed`` or the ``CFCSR_SEED``
environment variable (default 0).  CSV outputs start with a ``#`` line
echoing the configuration; JSON outputs carry it under ``"config"``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from typing import Sequence

import numpy as np

from .datasets import DATASETS, DatasetUnavailable, load_dataset
from .high_rho import SeriesCapError
from .imhof import QuadratureError
from .inference import (
    cf_test,
    default_envelope_grid,
    default_omnibus_rhos,
    envelope,
    null_distribution,
    omnibus_test,
)
from .patterns import PatternFormatError, Window, read_pattern, to_csv
from .simulate import SimSpec, SimulationError, simulate
from .spectrum import SpectrumTruncationError
from .study import power_study, type1_study

__all__ = ["main", "build_parser"]

log = logging.getLogger("cfcsr")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INFEASIBLE = 0, 2, 3, 4

# desk-scale and paper-scale replicate counts
_SCALE = {
    False: {"reps": 5000, "mc_reps": 2000, "power_reps": 2000, "null_reps": 5000},
    True: {"reps": 50000, "mc_reps": 20000, "power_reps": 2000, "null_reps": 50000},
}


class InputError(Exception):
    """Invalid user input (bad file, bad option combination)."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CFCSR_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise InputError(f"CFCSR_SEED must be an integer, got {env!r}") from None


def _reps(args, key: str) -> int:
    value = getattr(args, "reps", None) if key != "null_reps" else args.null_reps
    if value is None:
        value = _SCALE[bool(args.paper_scale)][key]
    if value < 1:
        raise InputError("replicate counts must be at least 1")
    return value


def _load(args):
    if args.dataset:
        return load_dataset(args.dataset)
    if not args.input:
        raise InputError("give --input or --dataset")
    window = None
    if args.window:
        w = args.window
        if len(w) != 2 * args.dim:
            raise InputError(f"--window needs {2 * args.dim} numbers (lower then upper)")
        window = Window(w[: args.dim], w[args.dim:])
    return read_pattern(args.input, dim=args.dim, window=window)


def _config(args, **extra) -> dict:
    skip = {"func"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    cfg.update(extra)
    return cfg


def _write(args, text: str) -> None:
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(config: dict, header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_test(args) -> int:
    pattern = _load(args)
    seed = _seed(args)
    method = args.method
    reps = _reps(args, "mc_reps")
    if args.omnibus:
        rhos = args.rhos or list(default_omnibus_rhos(pattern.n))
        report = omnibus_test(pattern, rhos, args.tail, method, reps, seed)
    else:
        if args.rho is None:
            raise InputError("give --rho or --omnibus")
        report = cf_test(pattern, args.rho, args.tail, method, reps, seed)
    out = report.as_dict()
    out["config"] = _config(args, seed=seed, reps=reps)
    _write(args, json.dumps(out, indent=2) + "\n")
    return EXIT_OK


def cmd_envelope(args) -> int:
    pattern = _load(args)
    seed = _seed(args)
    reps = _reps(args, "mc_reps")
    if args.rho_max is not None or args.rho_min is not None:
        lo = args.rho_min or 1.0
        hi = args.rho_max or 2.0 * math.pi * math.sqrt(pattern.n)
        grid = np.geomspace(lo, hi, args.grid_size)
    else:
        grid = default_envelope_grid(pattern.n, args.grid_size)
    curve = envelope(pattern, grid, args.method, reps, seed)
    header = ("rho", "delta", "mean", "lo95", "hi95", "lo99", "hi99")
    _write(args, _csv_text(_config(args, seed=seed, reps=reps), header, curve.rows()))
    return EXIT_OK


def cmd_type1(args) -> int:
    seed = _seed(args)
    reps = _reps(args, "reps")
    rhos = {n: args.rhos for n in args.n} if args.rhos else None
    rows = type1_study(args.n, reps, seed, args.alpha, rhos)
    header = ("n", "rho", "tail", "method", "rejection_rate", "mc_se")
    body = ((r.n, r.rho, r.tail, r.method, r.rejection_rate, r.mc_se) for r in rows)
    _write(args, _csv_text(_config(args, seed=seed, reps=reps), header, body))
    return EXIT_OK


def cmd_power(args) -> int:
    seed = _seed(args)
    reps = _reps(args, "power_reps")
    null_reps = _reps(args, "null_reps")
    result = power_study(args.n, reps, null_reps, seed, args.alpha,
                         progress=lambda label, n: log.info("done %s n=%d", label, n))
    for (label, n), msg in result.failed.items():
        log.warning("cell %s n=%d failed: %s", label, n, msg)
    header = ("alternative", "n", "test", "power", "mc_se")
    _write(args, _csv_text(_config(args, seed=seed, reps=reps, null_reps=null_reps),
                           header, result.rows()))
    return EXIT_OK


def cmd_nulldist(args) -> int:
    seed = _seed(args)
    reps = _reps(args, "mc_reps")
    null = null_distribution(args.rho, args.n, args.dim, args.method, reps, seed)
    probs = np.asarray(args.p, dtype=float)
    if np.any((probs <= 0.0) | (probs >= 1.0)):
        raise InputError("probabilities must lie in (0, 1)")
    q = np.atleast_1d(np.asarray(null.quantile(probs), dtype=float))
    back = np.atleast_1d(np.asarray(null.cdf(q), dtype=float))
    rows = ((float(p), float(v), float(b), null.method) for p, v, b in zip(probs, q, back))
    header = ("p", "quantile", "cdf_at_quantile", "method")
    _write(args, _csv_text(_config(args, seed=seed, mean=null.mean), header, rows))
    return EXIT_OK


def _params(items: Sequence[str]) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--param expects key=value, got {item!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise InputError(f"parameter {key!r} must be numeric") from None
    return out


def cmd_simulate(args) -> int:
    seed = _seed(args)
    try:
        spec = SimSpec(args.kind, args.n, args.dim, _params(args.param), seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    pattern = simulate(spec, args.rep)
    _write(args, to_csv(pattern, header=args.header))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfcsr",
                                     description="Characteristic-function tests of CSR")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (default: $CFCSR_SEED or 0)")
    common.add_argument("--output", "-o", default=None, help="output file (default: stdout)")
    common.add_argument("--paper-scale", action="store_true",
                        help="use the full replicate counts of the original study")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", "-i", help="CSV file of points")
    data.add_argument("--dataset", choices=sorted(DATASETS), help="registered example dataset")
    data.add_argument("--dim", type=int, default=2)
    data.add_argument("--window", type=_float_list, default=None,
                      help="lower then upper corner, e.g. 0,0,5.7,5.7; default: unit cube")
    data.add_argument("--method", default="auto",
                      choices=("auto", "imhof", "high_rho", "monte_carlo"))
    data.add_argument("--reps", type=int, default=None,
                      help="Monte Carlo replicates when --method monte_carlo")

    p = sub.add_parser("test", parents=[common, data], help="CF test of one pattern")
    p.add_argument("--rho", type=float)
    p.add_argument("--rhos", type=_float_list, default=None, help="resolutions for --omnibus")
    p.add_argument("--omnibus", action="store_true", help="Bonferroni omnibus test")
    p.add_argument("--tail", default="two_sided", choices=("two_sided", "two", "upper", "lower"))
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("envelope", parents=[common, data], help="Delta(rho) with null bands")
    p.add_argument("--grid-size", type=int, default=64)
    p.add_argument("--rho-min", type=float, default=None)
    p.add_argument("--rho-max", type=float, default=None)
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("type1", parents=[common], help="type I error study")
    p.add_argument("--n", type=_int_list, default=[25, 100])
    p.add_argument("--rhos", type=_float_list, default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--reps", type=int, default=None)
    p.set_defaults(func=cmd_type1)

    p = sub.add_parser("power", parents=[common], help="power study")
    p.add_argument("--n", type=_int_list, default=[25, 75])
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--null-reps", type=int, default=None)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("nulldist", parents=[common], help="null quantiles of Delta")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--p", type=_float_list, default=[0.005, 0.025, 0.5, 0.975, 0.995])
    p.add_argument("--method", default="auto",
                   choices=("auto", "imhof", "high_rho", "monte_carlo"))
    p.add_argument("--reps", type=int, default=None)
    p.set_defaults(func=cmd_nulldist)

    p = sub.add_parser("simulate", parents=[common], help="simulate one pattern")
    p.add_argument("--kind", required=True, choices=("csr", "matern", "ssi", "inhom_poisson"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--param", action="append", help="process parameter key=value (repeatable)")
    p.add_argument("--rep", type=int, default=0, help="replicate index")
    p.add_argument("--header", action="store_true")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "tail", None) == "two":
        args.tail = "two_sided"
    if hasattr(args, "alpha") and not (0.0 <= args.alpha < 1.0):
        print("error: alpha must lie in [0, 1)", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, DatasetUnavailable, PatternFormatError, FileNotFoundError,
            IsADirectoryError, PermissionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SimulationError as exc:
        print(f"infeasible simulation: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (QuadratureError, SpectrumTruncationError, SeriesCapError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
