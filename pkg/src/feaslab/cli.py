"""Command line entry point ``feaslab``.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .bounds import BoundInputError, binomial_tail, binomial_upper_tail, chernoff_estimate
from .convex import SolverFailure as ConvexFailure
from .experiments import (ConfigError, OutputError, SolverFailure, load_config, run,
                          write_outputs)
from .polyhedral.rays import ConeSizeError, DegenerateInputError, enumerate_rays
from .polyhedral.simplex import LPError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("feaslab")


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = cfg.with_seed(args.seed)
    out = Path(args.out or cfg.output or "results")
    t0 = time.perf_counter()
    result = run(cfg, threads=max(1, args.threads))
    paths = write_outputs(result, out)
    log.info("%s: %d records in %.1fs", cfg.label, len(result.records), time.perf_counter() - t0)
    verdict = result.report.get("pass")
    print(f"{cfg.label}: pass={verdict}")
    for p in paths:
        print(f"  wrote {p}")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    out = {"m": args.m, "N": args.n, "alpha": args.alpha,
           "binomial_tail": binomial_tail(args.m, args.n, args.alpha),
           "binomial_upper_tail": binomial_upper_tail(args.m, args.n, args.alpha)}
    try:
        out["chernoff_estimate"] = chernoff_estimate(args.m, args.n, args.alpha)
    except BoundInputError as exc:
        out["chernoff_estimate"] = None
        out["chernoff_note"] = str(exc)
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _read_matrix(path: str) -> np.ndarray:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot read {p}: {exc.strerror}") from None
    try:
        if text.lstrip().startswith("["):
            W = np.asarray(json.loads(text), float)
        else:
            W = np.loadtxt(p, ndmin=2, delimiter="," if "," in text else None)
    except ValueError as exc:
        raise ConfigError(f"{p}: not a numeric matrix ({exc})") from None
    return np.atleast_2d(W)


def _cmd_rays(args) -> int:
    W = _read_matrix(args.matrix)
    try:
        gen = enumerate_rays(W)
    except (ConeSizeError, DegenerateInputError) as exc:
        raise ConfigError(str(exc)) from None
    print(json.dumps(gen.to_dict(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="feaslab",
                                 description="Feasibility of SAA solutions: experiments and tools.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (default: config 'output' or ./results)")
    r.add_argument("--seed", type=int, help="override the master seed")
    r.add_argument("--threads", type=int, default=1, help="worker processes")
    r.set_defaults(func=_cmd_run)
    b = sub.add_parser("bounds", help="evaluate the binomial bound and its Chernoff estimate")
    b.add_argument("--m", type=int, required=True)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--alpha", type=float, required=True)
    b.set_defaults(func=_cmd_bounds)
    y = sub.add_parser("rays", help="extreme rays of {a : a^T W >= 0}")
    y.add_argument("--matrix", required=True, help="JSON nested list or whitespace/CSV text")
    y.set_defaults(func=_cmd_rays)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, BoundInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, ConvexFailure, LPError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
