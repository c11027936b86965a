"""Command line entry point: ``qflow solve`` and ``qflow bench``.

Exit status: 0 when the run converged (both runs for ``bench``), 2 when it
did not, 1 on bad input.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .bench import FORMATS, emit_report, emit_solve_report, run_benchmark
from .caseio import CaseFormatError, load_case
from .hhl import HhlConfig, HHLSolver
from .linsolve import LUSolver
from .powerflow import nr_solve

log = logging.getLogger("qflow")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", required=True,
                   help="builtin:case3, builtin:case9q, or a path to a .m / .json case file")
    p.add_argument("--tol", type=float, default=1e-8, help="max-norm step tolerance (default 1e-8)")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--hhl-clock-qubits", type=int, default=None, metavar="M",
                   help="clock register size; sized from the condition number when omitted")
    p.add_argument("--hhl-time", type=float, default=None, metavar="T",
                   help="evolution time t (with --hhl-constant, disables auto scaling)")
    p.add_argument("--hhl-constant", type=float, default=None, metavar="C",
                   help="rotation constant C (with --hhl-time, disables auto scaling)")
    p.add_argument("--out", default=None, help="write the report here instead of stdout")
    p.add_argument("--format", choices=FORMATS, default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", help="run one Newton-Raphson load flow")
    _add_common(solve)
    solve.add_argument("--solver", choices=("lu", "hhl"), default="lu")
    bench = sub.add_parser("bench", help="run LU and HHL and compare their steps")
    _add_common(bench)
    return parser


def _hhl_config(args) -> HhlConfig:
    manual = (args.hhl_time, args.hhl_constant)
    if any(v is not None for v in manual) and not all(v is not None for v in manual):
        raise ValueError("--hhl-time and --hhl-constant must be given together")
    if args.hhl_time is not None:
        return HhlConfig(m=args.hhl_clock_qubits, t=args.hhl_time, c=args.hhl_constant, auto_scale=False)
    return HhlConfig(m=args.hhl_clock_qubits)


def _configure_logging() -> None:
    level = os.environ.get("QFLOW_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w") as fh:
            fh.write(text)


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.hhl_clock_qubits is not None and args.hhl_clock_qubits < 1:
            raise ValueError("--hhl-clock-qubits must be at least 1")
        if args.tol <= 0 or args.max_iter < 1:
            raise ValueError("--tol must be positive and --max-iter at least 1")
        case = load_case(args.case)
        config = _hhl_config(args)
    except (CaseFormatError, ValueError, OSError) as exc:
        print(f"qflow: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for w in case.warnings:
        log.info("%s: %s", case.name, w)

    if args.command == "solve":
        solver = LUSolver() if args.solver == "lu" else HHLSolver(config)
        report = nr_solve(case, solver, tol=args.tol, max_iter=args.max_iter)
        log.info("%s/%s: %s after %d iterations", case.name, solver.name, report.status, report.iterations)
        _write(emit_solve_report(report, args.format), args.out)
        return EXIT_OK if report.converged else EXIT_NOT_CONVERGED

    report = run_benchmark(case, tol=args.tol, max_iter=args.max_iter, config=config)
    _write(emit_report(report, args.format), args.out)
    ok = report.classical.converged and report.hybrid.converged
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
