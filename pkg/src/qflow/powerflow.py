"""Newton-Raphson load flow in polar coordinates.

The unknowns are the angles of every non-slack bus followed by the relative
magnitude corrections ``dV/|V|`` of every PQ bus. The Jacobian's magnitude
columns are scaled by ``|V|`` to match, so one step solves ``J @ dx = dbeta``
with ``dx = [d_ang; dV/|V|]``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .caseio import CaseFile
from .linsolve import LinearSolver, SingularMatrixError
from .network import AdmittanceMatrix, build_ybus

log = logging.getLogger(__name__)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PowerFlowState:
    v_mag: np.ndarray
    v_ang: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        object.__setattr__(self, "v_mag", _frozen(self.v_mag))
        object.__setattr__(self, "v_ang", _frozen(self.v_ang))
        if self.v_mag.shape != self.v_ang.shape:
            raise ValueError("v_mag and v_ang must have the same length")

    @classmethod
    def from_case(cls, case: CaseFile) -> "PowerFlowState":
        vm, va = zip(*case.flat_start)
        return cls(np.array(vm), np.array(va), 0)

    @property
    def voltage(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)


@dataclass(frozen=True)
class Mismatch:
    dp: np.ndarray
    dq: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.dp, self.dq])


@dataclass(frozen=True)
class StepDirection:
    d_ang: np.ndarray
    d_vrel: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.d_ang, self.d_vrel])


@dataclass(frozen=True)
class Jacobian:
    j: np.ndarray

    @property
    def order(self) -> int:
        return self.j.shape[0]


@dataclass
class IterationRecord:
    iteration: int
    mismatch_norm: float
    step_norm: float
    step: np.ndarray
    jacobian: np.ndarray
    mismatch: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, include_system: bool = False) -> dict:
        out = {
            "iteration": self.iteration,
            "mismatch_norm": self.mismatch_norm,
            "step_norm": self.step_norm,
            "step": self.step.tolist(),
            "diagnostics": _jsonable(self.diagnostics),
        }
        if include_system:
            out["jacobian"] = self.jacobian.tolist()
            out["mismatch"] = self.mismatch.tolist()
        return out


@dataclass
class SolveReport:
    case_name: str
    solver: str
    converged: bool
    status: str  # converged | max_iter | singular | diverged
    iterations: int
    tol: float
    per_iteration: list[IterationRecord]
    final_state: PowerFlowState
    p: np.ndarray
    q: np.ndarray
    message: str = ""
    bus_ids: list[int] = field(default_factory=list)
    base_mva: float = 100.0

    def to_dict(self, include_system: bool = False) -> dict:
        return {
            "case": self.case_name,
            "solver": self.solver,
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
            "tol": self.tol,
            "message": self.message,
            "v_mag": self.final_state.v_mag.tolist(),
            "v_ang": self.final_state.v_ang.tolist(),
            "v_ang_deg": np.degrees(self.final_state.v_ang).tolist(),
            "p": self.p.tolist(),
            "q": self.q.tolist(),
            "p_mw": (self.p * self.base_mva).tolist(),
            "q_mvar": (self.q * self.base_mva).tolist(),
            "bus_ids": list(self.bus_ids),
            "base_mva": self.base_mva,
            "per_iteration": [r.to_dict(include_system) for r in self.per_iteration],
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def _flows(y: AdmittanceMatrix, state: PowerFlowState) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair terms |Vi||Vj|(G cos + B sin) and |Vi||Vj|(G sin - B cos)."""
    theta = state.v_ang[:, None] - state.v_ang[None, :]
    vv = np.outer(state.v_mag, state.v_mag)
    c, s = np.cos(theta), np.sin(theta)
    m = vv * (y.g * c + y.b * s)
    n = vv * (y.g * s - y.b * c)
    return m, n


def compute_injections(y: AdmittanceMatrix, state: PowerFlowState) -> tuple[np.ndarray, np.ndarray]:
    """Net active and reactive power injected at every bus (per unit)."""
    if y.n != state.v_mag.shape[0]:
        raise ValueError(f"Y is {y.n}x{y.n} but state has {state.v_mag.shape[0]} buses")
    m, n = _flows(y, state)
    return m.sum(axis=1), n.sum(axis=1)


def compute_mismatch(case: CaseFile, state: PowerFlowState, y: AdmittanceMatrix | None = None) -> Mismatch:
    net = case.network
    y = build_ybus(net) if y is None else y
    p, q = compute_injections(y, state)
    p_spec = np.array([b.p_spec for b in net.buses])
    q_spec = np.array([b.q_spec for b in net.buses])
    ns, pq = net.non_slack, net.pq
    return Mismatch(dp=p_spec[ns] - p[ns], dq=q_spec[pq] - q[pq])


def build_jacobian(case: CaseFile, state: PowerFlowState, y: AdmittanceMatrix | None = None) -> Jacobian:
    """Analytic Jacobian of the injections w.r.t. ``[angles; |V|-scaled magnitudes]``."""
    net = case.network
    y = build_ybus(net) if y is None else y
    m, n = _flows(y, state)
    p, q = m.sum(axis=1), n.sum(axis=1)
    dp_dang = n - np.diag(q)
    dp_dvm = m + np.diag(p)
    dq_dang = -m + np.diag(p)
    dq_dvm = n + np.diag(q)
    ns, pq = net.non_slack, net.pq
    j = np.block([
        [dp_dang[np.ix_(ns, ns)], dp_dvm[np.ix_(ns, pq)]],
        [dq_dang[np.ix_(pq, ns)], dq_dvm[np.ix_(pq, pq)]],
    ])
    return Jacobian(j)


def apply_step(case: CaseFile, state: PowerFlowState, step: StepDirection) -> PowerFlowState:
    net = case.network
    v_ang = state.v_ang.copy()
    v_mag = state.v_mag.copy()
    v_ang[net.non_slack] += step.d_ang
    v_mag[net.pq] = v_mag[net.pq] + step.d_vrel * v_mag[net.pq]
    return PowerFlowState(v_mag, v_ang, state.iteration + 1)


def split_step(case: CaseFile, dx: np.ndarray) -> StepDirection:
    k = len(case.network.non_slack)
    return StepDirection(d_ang=np.asarray(dx[:k]), d_vrel=np.asarray(dx[k:]))


def nr_solve(
    case: CaseFile,
    solver: LinearSolver,
    tol: float = 1e-8,
    max_iter: int = 50,
    initial: PowerFlowState | None = None,
) -> SolveReport:
    """Run Newton-Raphson until the step satisfies ``max|dx| <= tol``.

    The linear solve is delegated to ``solver``; everything else is shared
    between backends. Failures (iteration limit, singular Jacobian, collapsing
    voltage) produce a non-converged report instead of raising.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    y = build_ybus(case.network)
    state = PowerFlowState.from_case(case) if initial is None else initial
    records: list[IterationRecord] = []
    status, message = "max_iter", f"no convergence within {max_iter} iterations"

    for k in range(1, max_iter + 1):
        mis = compute_mismatch(case, state, y)
        jac = build_jacobian(case, state, y)
        rhs = mis.stacked
        try:
            sol = solver.solve(jac.j, rhs)
        except SingularMatrixError as exc:
            status, message = "singular", f"iteration {k}: {exc}"
            log.warning("%s: %s", case.name, message)
            break
        dx = np.asarray(sol.x, dtype=float)
        step_norm = float(np.max(np.abs(dx))) if dx.size else 0.0
        records.append(
            IterationRecord(
                iteration=k,
                mismatch_norm=float(np.max(np.abs(rhs))) if rhs.size else 0.0,
                step_norm=step_norm,
                step=dx.copy(),
                jacobian=jac.j,
                mismatch=rhs,
                diagnostics=dict(sol.diagnostics),
            )
        )
        state = apply_step(case, state, split_step(case, dx))
        log.debug("%s [%s] iter %d: |dbeta|=%.3e |dx|=%.3e", case.name, solver.name, k,
                  records[-1].mismatch_norm, step_norm)
        if not (np.all(np.isfinite(state.v_mag)) and np.all(state.v_mag > 0)):
            status, message = "diverged", f"iteration {k}: non-positive or non-finite voltage magnitude"
            break
        if step_norm <= tol:
            status, message = "converged", ""
            break

    p, q = compute_injections(y, state)
    return SolveReport(
        case_name=case.name,
        solver=solver.name,
        converged=status == "converged",
        status=status,
        iterations=len(records),
        tol=tol,
        per_iteration=records,
        final_state=state,
        p=p,
        q=q,
        message=message,
        bus_ids=[case.network.external_ids()[k] for k in range(case.network.n)],
        base_mva=case.network.base_mva,
    )
