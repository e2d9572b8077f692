"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 comparison failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness
from .analytic import solve_fixed_point
from .errors import (ConfigError, CovarianceNotSPDError, EmptyDimensionError, FixedPointError,
                     InfiniteCovarianceError, InvalidParameterError, JoinError,
                     JointCovarianceSingularError, ScopeError, ShapeError, SymmetryError)
from .operators import build_operator, parse_operator, resolution_consistency_check

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_COMPARE = 0, 1, 2, 3

NUMERIC_ERRORS = (FixedPointError, CovarianceNotSPDError, JointCovarianceSingularError,
                  InfiniteCovarianceError, np.linalg.LinAlgError)
USAGE_ERRORS = (ConfigError, InvalidParameterError, ShapeError, EmptyDimensionError,
                ScopeError, SymmetryError, JoinError, OSError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _outputs(points, cfg, out: Path, stem: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    csv_path = harness.emit_csv(points, out / f"{stem}.csv")
    svgs = harness.emit_svg(points, out / f"{stem}.svg", n=cfg.n, x_scale=cfg.x_scale)
    print(f"wrote {csv_path}")
    for p in svgs:
        print(f"wrote {p}")


def cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    points = harness.run_sweep(cfg, workers=args.workers)
    _outputs(points, cfg, Path(args.out), "sweep")
    return EXIT_OK


def cmd_analytic(args) -> int:
    cfg = harness.load_config(args.config)
    points = harness.run_sweep(cfg, with_samples=False)
    _outputs(points, cfg, Path(args.out), "analytic")
    return EXIT_OK


def cmd_compare(args) -> int:
    points = harness.read_csv(args.csv)
    ref = harness.read_csv(args.analytic) if args.analytic else None
    report = harness.compare(points, args.sigmas, reference=ref)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_COMPARE


def cmd_fixed_point(args) -> int:
    if args.w == "identity":
        W = np.eye(args.d)
    else:
        W = harness.read_matrix(args.w)
    sol = solve_fixed_point(W, args.gamma, args.alpha)
    print(f"c = {sol.c:.17g}")
    print(f"c_prime = {sol.c_prime:.17g}")
    print(f"residual = {sol.residual:.3e}")
    print(f"iterations = {sol.iterations}")
    return EXIT_OK


def cmd_operator(args) -> int:
    spec = parse_operator(args.spec, args.d)
    op = build_operator(spec)
    print(f"kind = {op.kind}")
    print(f"d = {op.d}")
    print(f"kappa_H = {op.kappa_H:.17g}")
    print(f"min_singular = {op.min_singular:.6g}")
    if args.check:
        d_list = [int(v) for v in args.check_d.split(",")] if args.check_d else [args.d, 2 * args.d, 4 * args.d]
        rep = resolution_consistency_check(spec, d_list)
        for d, k in rep.kappas.items():
            print(f"  d={d}: kappa_H = {k:.17g}")
        print("resolution check " + ("PASS" if rep.passed else "FAIL"))
        if not rep.passed:
            return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tlreg", description="Transfer-learning regression experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sweep", help="Monte-Carlo sweep with analytic overlay")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("analytic", help="formula-only curves, no sampling")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_analytic)

    s = sub.add_parser("compare", help="empirical versus analytic verdicts")
    s.add_argument("--csv", required=True)
    s.add_argument("--sigmas", type=float, required=True)
    s.add_argument("--analytic", help="take the analytic column from this CSV instead")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("fixed-point", help="solve the resolvent fixed point")
    s.add_argument("--w", required=True, help="matrix file or 'identity'")
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--d", type=int, default=1, help="dimension for --w identity")
    s.set_defaults(func=cmd_fixed_point)

    s = sub.add_parser("operator", help="build an operator and report its scaling")
    s.add_argument("--spec", required=True)
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--check", action="store_true")
    s.add_argument("--check-d", help="comma-separated resolutions for --check")
    s.set_defaults(func=cmd_operator)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
