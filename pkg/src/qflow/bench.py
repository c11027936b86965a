"""Classical-vs-HHL benchmark runs and their serialisation."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .caseio import CaseFile
from .hhl import HhlConfig, HHLSolver
from .linsolve import LinearSolution, LinearSolver, LUSolver
from .powerflow import SolveReport, _jsonable, nr_solve


@dataclass
class RunSummary:
    solver: str
    converged: bool
    status: str
    iterations: int
    wall_time: float
    step_norms: list[float]
    mismatch_norms: list[float]
    v_mag: list[float]
    v_ang: list[float]

    @classmethod
    def from_report(cls, report: SolveReport, wall_time: float) -> "RunSummary":
        return cls(
            solver=report.solver,
            converged=report.converged,
            status=report.status,
            iterations=report.iterations,
            wall_time=wall_time,
            step_norms=[r.step_norm for r in report.per_iteration],
            mismatch_norms=[r.mismatch_norm for r in report.per_iteration],
            v_mag=report.final_state.v_mag.tolist(),
            v_ang=report.final_state.v_ang.tolist(),
        )


@dataclass
class BenchReport:
    case: str
    tol: float
    classical: RunSummary
    hybrid: RunSummary
    # one entry per hybrid iteration: |dx_LU - dx_HHL|_2 on that iteration's system
    diffs: list[float] = field(default_factory=list)
    hhl_diagnostics: list[dict] = field(default_factory=list)
    # the (jacobian, mismatch) pair behind each diff, for re-checking
    systems: list[dict] = field(default_factory=list)

    @property
    def voltage_difference(self) -> float:
        """Max-norm gap between the classical and hybrid final voltages (magnitude and angle)."""
        dv = np.abs(np.subtract(self.classical.v_mag, self.hybrid.v_mag))
        da = np.abs(np.subtract(self.classical.v_ang, self.hybrid.v_ang))
        return float(max(dv.max(initial=0.0), da.max(initial=0.0)))

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "BenchReport":
        data = dict(data)
        data["classical"] = RunSummary(**data["classical"])
        data["hybrid"] = RunSummary(**data["hybrid"])
        return cls(**data)


class PairedSolver(LinearSolver):
    """Runs ``primary`` and, on the very same system, ``reference``.

    The primary's answer drives the iteration; the 2-norm gap to the reference
    answer is recorded in the diagnostics under ``"diff"``.
    """

    def __init__(self, primary: LinearSolver, reference: LinearSolver):
        self.primary = primary
        self.reference = reference
        self.name = primary.name

    def solve(self, a, b) -> LinearSolution:
        sol = self.primary.solve(a, b)
        ref = self.reference.solve(a, b)
        diag = dict(sol.diagnostics)
        diag["diff"] = float(np.linalg.norm(np.asarray(sol.x) - ref.x))
        diag["reference_x"] = ref.x.tolist()
        return LinearSolution(sol.x, diag)


def run_benchmark(case: CaseFile, tol: float = 1e-8, max_iter: int = 50,
                  config: HhlConfig = HhlConfig()) -> BenchReport:
    """Solve ``case`` with LU, then with HHL, pairing every HHL step with an LU
    solve of the same linearisation."""
    t0 = time.perf_counter()
    classical = nr_solve(case, LUSolver(), tol=tol, max_iter=max_iter)
    t1 = time.perf_counter()
    hybrid = nr_solve(case, PairedSolver(HHLSolver(config), LUSolver()), tol=tol, max_iter=max_iter)
    t2 = time.perf_counter()

    diffs, diags, systems = [], [], []
    for rec in hybrid.per_iteration:
        d = dict(rec.diagnostics)
        diffs.append(d.pop("diff"))
        d.pop("reference_x", None)
        diags.append(_jsonable(d))
        systems.append({"jacobian": rec.jacobian.tolist(), "mismatch": rec.mismatch.tolist(),
                        "step": rec.step.tolist()})
    return BenchReport(
        case=case.name,
        tol=tol,
        classical=RunSummary.from_report(classical, t1 - t0),
        hybrid=RunSummary.from_report(hybrid, t2 - t1),
        diffs=diffs,
        hhl_diagnostics=diags,
        systems=systems,
    )


# Serialisation -------------------------------------------------------------

FORMATS = ("json", "csv", "markdown")


def _fmt(x: float) -> str:
    return f"{x:.4e}"


def emit_report(report: BenchReport, format: str = "json") -> str:
    """Render a :class:`BenchReport`; output is deterministic for equal reports."""
    if format == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "classical_step_norm", "hhl_step_norm", "diff_l2"])
        c, h = report.classical.step_norms, report.hybrid.step_norms
        for k in range(max(len(c), len(h))):
            w.writerow([
                k + 1,
                repr(c[k]) if k < len(c) else "",
                repr(h[k]) if k < len(h) else "",
                repr(report.diffs[k]) if k < len(report.diffs) else "",
            ])
        return buf.getvalue()
    if format == "markdown":
        c, h = report.classical, report.hybrid
        lines = [
            f"## {report.case}",
            "",
            "| Case/Version | Converged | Iterations | Time to Solve |",
            "|---|---|---|---|",
            f"| {report.case}/Classical | {c.converged} | {c.iterations} | {c.wall_time:.4f}s |",
            f"| {report.case}/HHL | {h.converged} | {h.iterations} | {h.wall_time:.4f}s |",
            "",
            "| Iteration | ‖Δα_CL − Δα_HHL‖₂ |",
            "|---|---|",
        ]
        lines += [f"| {k} | {_fmt(d)} |" for k, d in enumerate(report.diffs, start=1)]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {format!r}; choose from {FORMATS}")


def emit_solve_report(report: SolveReport, format: str = "json") -> str:
    if format == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "mismatch_norm", "step_norm"])
        for r in report.per_iteration:
            w.writerow([r.iteration, repr(r.mismatch_norm), repr(r.step_norm)])
        return buf.getvalue()
    if format == "markdown":
        lines = [
            f"## {report.case_name} ({report.solver})",
            "",
            f"status: {report.status}, iterations: {report.iterations}",
            "",
            "| Iteration | max abs mismatch | max abs step |",
            "|---|---|---|",
        ]
        lines += [f"| {r.iteration} | {_fmt(r.mismatch_norm)} | {_fmt(r.step_norm)} |" for r in report.per_iteration]
        lines += ["", "| Bus | V (pu) | angle (deg) | P (MW) | Q (Mvar) |", "|---|---|---|---|---|"]
        ids = report.bus_ids or list(range(len(report.p)))
        for k, bus in enumerate(ids):
            vm, va = report.final_state.v_mag[k], report.final_state.v_ang[k]
            lines.append(f"| {bus} | {vm:.6f} | {np.degrees(va):.4f} | "
                         f"{report.p[k] * report.base_mva:.3f} | {report.q[k] * report.base_mva:.3f} |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {format!r}; choose from {FORMATS}")
