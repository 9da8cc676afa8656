"""Command line: ``chemoflow run|sweep|verify|exponents``.

Exit codes: 0 success with every monitored bound held, 2 when a run
completed but a bound (or a structural hypothesis) failed, 1 on errors.
"""

from __future__ import annotations

import argparse
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import load_config
from .diagnostics import CSV_COLUMNS
from .errors import ChemoflowError
from .expressions import spatial_function
from .io import write_timeseries
from .model import RegimeTag, check_structural_hypotheses, classify_regime, select_interpolation_exponents

EXIT_OK, EXIT_ERROR, EXIT_VIOLATED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with code 1 after printing help to stderr."""

    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _fraction(x: float) -> str:
    return str(Fraction(x).limit_denominator(1000))


def _cmd_run(args) -> int:
    from .stepper import run

    cfg = load_config(args.config)
    out = Path(args.out or cfg.output.dir)
    start = time.perf_counter()
    result = run(cfg, out_dir=out)
    csv_path = write_timeseries(out / cfg.output.csv, result.rows, CSV_COLUMNS)
    print(f"{result.steps} steps to t={result.final.t:g} in {time.perf_counter() - start:.2f} s; wrote {csv_path}")
    for b in result.bounds.bounds:
        extra = f" sup={b.sup:.6g}" if b.sup is not None else f" min_margin={min(b.margin):.3e}"
        print(f"  {b.name:26s} {'held' if b.held else 'VIOLATED'}{extra}")
    return EXIT_OK if result.bounds.all_held else EXIT_VIOLATED


def _cmd_sweep(args) -> int:
    from .sweep import epsilon_sweep, write_sweep_csv

    cfg = load_config(args.config)
    out = Path(args.out or cfg.output.dir)
    start = time.perf_counter()
    report = epsilon_sweep(cfg)
    path = write_sweep_csv(out / "sweep.csv", report)
    print(f"{len(report.eps_list)} runs in {time.perf_counter() - start:.2f} s; wrote {path}")
    print(report.verdict_line())
    all_held = all(r.bounds_held for r in report.runs)
    return EXIT_OK if report.passed and all_held else EXIT_VIOLATED


def _cmd_verify(args) -> int:
    cfg = load_config(args.config)
    params = cfg.build_params()
    regime = classify_regime(params.m, params.mu, params.alpha)
    print(f"regime {regime.tag.value}")
    if not regime.admissible:
        return EXIT_VIOLATED
    grid = cfg.build_grid()
    c0 = np.asarray(spatial_function(cfg.params.c0)(*grid.cell_centers()), dtype=float)
    c_max = max(float(np.max(c0)), 1e-12)
    report = check_structural_hypotheses(params, c_max)
    for chk in report.checks:
        print(f"  {chk.name:22s} {'ok' if chk.passed else 'FAILED'} (worst at s={chk.worst_point:.4g})")
    return EXIT_OK if report.passed else EXIT_VIOLATED


def _cmd_exponents(args) -> int:
    regime = classify_regime(args.m, args.mu, args.alpha)
    print(f"regime {regime.tag.value}")
    if regime.tag is RegimeTag.INADMISSIBLE:
        return EXIT_VIOLATED
    print(f"p1={_fraction(regime.p1)} p2={_fraction(regime.p2)} p3={_fraction(regime.p3)}")
    r, q = select_interpolation_exponents(regime.p1)
    print(f"r={r:.6g} q={q:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chemoflow", description="Regularized chemotaxis-fluid simulator.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("run", help="integrate one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: [output] dir)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="rerun over the configured eps list")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("verify", help="check the regime and structural hypotheses")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("exponents", help="print the regime and exponents")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.set_defaults(func=_cmd_exponents)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ChemoflowError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
