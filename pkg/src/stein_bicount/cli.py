"""Command-line front end.

Exit codes: 0 when a result was computed (whatever the test decision),
1 for numerical or degeneracy failures, 2 for usage, parse and parameter
errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bootstrap import BootstrapConfig, bootstrap_p_value, chi2_test
from .distributions import (
    BivariateSample,
    BnbParams,
    BvbParams,
    falling_factorial,
    factorial_moment,
    parse_spec,
    pmf_grid,
    sample,
)
from .errors import DegenerateSample, SteinBicountError, TruncationError
from .rng import fresh_seed
from .study import DEFAULT_N, TABLE_COLUMNS, render, run_table

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2

logger = logging.getLogger("stein_bicount")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# Pairs files
# --------------------------------------------------------------------------


def _int_field(value: str, name: str, line: int, minimum: int) -> int:
    try:
        v = int(value)
    except ValueError:
        raise UsageError(f"line {line}: {name} must be an integer, got {value!r}") from None
    if v < minimum:
        raise UsageError(f"line {line}: {name} must be >= {minimum}, got {v}")
    return v


def read_pairs(text: str, source: Optional[str] = None) -> BivariateSample:
    """Parse ``x1,x2[,count]`` CSV text; a ``count`` column repeats its row."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise UsageError("pairs file is empty")
    header = [c.strip() for c in rows[0]]
    if header not in (["x1", "x2"], ["x1", "x2", "count"]):
        raise UsageError(f"pairs file header must be 'x1,x2' or 'x1,x2,count', got {','.join(header)!r}")
    has_count = len(header) == 3
    x1, x2, counts = [], [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise UsageError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        x1.append(_int_field(row[0].strip(), "x1", line, 0))
        x2.append(_int_field(row[1].strip(), "x2", line, 0))
        counts.append(_int_field(row[2].strip(), "count", line, 1) if has_count else 1)
    if not x1:
        raise UsageError("pairs file has no data rows")
    reps = np.asarray(counts)
    return BivariateSample(np.repeat(x1, reps), np.repeat(x2, reps), source=source)


def write_pairs(s: BivariateSample) -> str:
    out = io.StringIO()
    out.write("x1,x2\n")
    for a, b in zip(s.x1.tolist(), s.x2.tolist()):
        out.write(f"{a},{b}\n")
    return out.getvalue()


def _load(path: str) -> BivariateSample:
    if path == "-":
        return read_pairs(sys.stdin.read(), "stdin")
    with open(path, encoding="utf-8") as fh:
        return read_pairs(fh.read(), path)


def _emit(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_pmf(args) -> int:
    dist = parse_spec(args.dist)
    if args.grid is not None:
        k1, k2 = args.grid
        grid = pmf_grid(dist, k1, k2, tol=None)
        _emit(grid.to_csv(), args.out)
        print(f"mass_deficit={grid.mass_deficit!r}", file=sys.stderr)
        return EXIT_OK
    if args.x is None or args.y is None:
        raise UsageError("pmf needs either X Y or --grid K1 K2")
    grid = pmf_grid(dist)
    if args.x > grid.k1 or args.y > grid.k2:
        grid = pmf_grid(dist, max(args.x, grid.k1), max(args.y, grid.k2), tol=None)
    prob = grid.prob(args.x, args.y)
    print(json.dumps({"x": args.x, "y": args.y, "prob": prob, "mass_deficit": grid.mass_deficit}))
    return EXIT_OK


def cmd_moment(args) -> int:
    dist = parse_spec(args.dist)
    if isinstance(dist, (BvbParams, BnbParams)):
        value = factorial_moment(dist, args.r, args.s)
        method = "recursion"
    else:
        grid = pmf_grid(dist, tol=1e-14)
        value = grid.expect(lambda x, y: falling_factorial(x, args.r) * falling_factorial(y, args.s))
        method = "grid"
    print(json.dumps({"r": args.r, "s": args.s, "factorial_moment": value, "method": method}))
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.n < 1:
        raise UsageError(f"--n must be >= 1, got {args.n}")
    s = sample(parse_spec(args.dist), args.n, args.seed)
    _emit(write_pairs(s), args.out)
    return EXIT_OK


def _run_test(args, null_family: Optional[str]) -> int:
    data = _load(args.input)
    weight = None if args.stat == "tstar" else args.weight
    if args.stat != "tstar" and weight is None:
        raise UsageError(f"--weight is required for {args.stat}")
    if getattr(args, "chi2", False):
        if args.stat != "tstar":
            raise UsageError(f"{args.stat} has no chi-square path; use --bootstrap B")
        report = chi2_test(data)
    else:
        if args.bootstrap is None:
            raise UsageError("give --bootstrap B" + (" or --chi2" if args.stat == "tstar" else ""))
        seed = args.seed if args.seed is not None else fresh_seed()
        cfg = BootstrapConfig(B=args.bootstrap, alpha=0.05, seed=seed, null_family=null_family, workers=args.workers)
        report = bootstrap_p_value(data, args.stat, weight, cfg)
    print(report.to_json())
    return EXIT_OK


def cmd_gof(args) -> int:
    return _run_test(args, "bpoi")


def cmd_symmetry(args) -> int:
    return _run_test(args, "bpoi-symmetric")


def cmd_study(args) -> int:
    seed = args.seed if args.seed is not None else fresh_seed()
    table = run_table(
        args.table,
        n_list=tuple(args.n),
        M=args.reps,
        alpha=args.alpha,
        seed=seed,
        scenarios=args.scenarios,
        tstar_method=args.tstar_method,
        workers=args.workers,
    )
    _emit(render(table, args.format), args.out)
    if args.seed is None:
        print(f"seed={seed}", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep exit code 2 but route through our handler
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stein-bicount", description="Bivariate count laws, Stein identities and Stein-type tests.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("pmf", help="joint probability or CSV grid")
    q.add_argument("dist", help="e.g. bpoi:1,1,1  bvb:10,0.35,0.325,0.3  bnb:5,0.2,0.2,0.05  bherm:1,1,1,1,1")
    q.add_argument("x", nargs="?", type=_nonneg_int)
    q.add_argument("y", nargs="?", type=_nonneg_int)
    q.add_argument("--grid", nargs=2, type=_nonneg_int, metavar=("K1", "K2"))
    q.add_argument("--out")
    q.set_defaults(func=cmd_pmf)

    q = sub.add_parser("moment", help="joint factorial moment E[X1_(r) X2_(s)]")
    q.add_argument("dist")
    q.add_argument("r", type=_nonneg_int)
    q.add_argument("s", type=_nonneg_int)
    q.set_defaults(func=cmd_moment)

    q = sub.add_parser("sample", help="draw pairs to CSV")
    q.add_argument("dist")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--seed", type=_nonneg_int, required=True)
    q.add_argument("--out")
    q.set_defaults(func=cmd_sample)

    for name, stats, func in (("gof", ("tstar", "t1"), cmd_gof), ("symmetry", ("t2", "t3"), cmd_symmetry)):
        q = sub.add_parser(name, help=f"{'/'.join(stats)} test on a pairs file")
        q.add_argument("--input", required=True, help="CSV with header x1,x2[,count]; '-' for stdin")
        q.add_argument("--stat", choices=stats, required=True)
        q.add_argument("--weight", choices=("f1", "f05"))
        mode = q.add_mutually_exclusive_group()
        mode.add_argument("--bootstrap", type=int, metavar="B")
        if name == "gof":
            mode.add_argument("--chi2", action="store_true")
        q.add_argument("--seed", type=_nonneg_int)
        q.add_argument("--workers", type=int)
        q.set_defaults(func=func)

    q = sub.add_parser("study", help="regenerate a size/power table")
    q.add_argument("--table", choices=sorted(TABLE_COLUMNS), required=True)
    q.add_argument("--reps", type=int, default=2000)
    q.add_argument("--alpha", type=float, default=0.05)
    q.add_argument("--seed", type=_nonneg_int)
    q.add_argument("--n", type=int, nargs="+", default=list(DEFAULT_N))
    q.add_argument("--scenarios", nargs="+")
    q.add_argument("--tstar-method", choices=("chi2", "warp-speed"), default="chi2")
    q.add_argument("--workers", type=int)
    q.add_argument("--format", choices=("csv", "markdown"), default="csv")
    q.add_argument("--out")
    q.set_defaults(func=cmd_study)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DegenerateSample, TruncationError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, SteinBicountError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
