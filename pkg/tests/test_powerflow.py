import numpy as np
import pytest

from qflow.caseio import CaseFile, flat_start
from qflow.linsolve import LinearSolution, LinearSolver, LUSolver, lu_solve
from qflow.network import AdmittanceMatrix, Branch, Bus, BusKind, Network, build_ybus
from qflow.powerflow import (
    PowerFlowState,
    build_jacobian,
    compute_injections,
    compute_mismatch,
    nr_solve,
)


def complex_injections(y, state):
    """S_i = V_i * conj(sum_j Y_ij V_j), straight complex arithmetic."""
    v = state.v_mag * np.exp(1j * state.v_ang)
    s = v * np.conj(y @ v)
    return s.real, s.imag


def make_case(buses, branches):
    net = Network(tuple(buses), tuple(branches))
    return CaseFile("test", net, flat_start(net))


def lossless_two_bus(**pq_kw):
    return make_case([Bus(0, BusKind.SLACK, v_mag=1.0), Bus(1, BusKind.PQ, **pq_kw)], [Branch(0, 1, 0.0, 1.0)])


def random_state(case, rng, spread=0.1):
    n = case.network.n
    vm = np.array([v for v, _ in case.flat_start]) * (1 + spread * rng.uniform(-1, 1, n))
    va = spread * rng.uniform(-1, 1, n)
    return PowerFlowState(vm, va)


def test_injection_single_bus():
    p, q = compute_injections(AdmittanceMatrix(np.array([[0.5 + 0j]])), PowerFlowState([2.0], [0.0]))
    np.testing.assert_allclose(p, [2.0])
    np.testing.assert_allclose(q, [0.0], atol=1e-15)


def test_injection_lossless_flat():
    y = AdmittanceMatrix(np.array([[-1j, 1j], [1j, -1j]]))
    p, q = compute_injections(y, PowerFlowState([1.0, 1.0], [0.0, 0.0]))
    np.testing.assert_allclose(p, 0, atol=1e-15)
    np.testing.assert_allclose(q, 0, atol=1e-15)


def test_injections_match_complex_power(case9q, rng):
    y = build_ybus(case9q.network)
    states = [PowerFlowState.from_case(case9q)] + [random_state(case9q, rng) for _ in range(5)]
    for state in states:
        p, q = compute_injections(y, state)
        p_ref, q_ref = complex_injections(y.y, state)
        np.testing.assert_allclose(p, p_ref, atol=1e-12)
        np.testing.assert_allclose(q, q_ref, atol=1e-12)


def test_mismatch_case9q_flat(case9q):
    state = PowerFlowState.from_case(case9q)
    p_ref, q_ref = complex_injections(build_ybus(case9q.network).y, state)
    net = case9q.network
    p_spec = np.array([b.p_gen - b.p_demand for b in net.buses])
    q_spec = np.array([b.q_gen - b.q_demand for b in net.buses])
    expected = np.concatenate([(p_spec - p_ref)[1:], (q_spec - q_ref)[3:]])
    mis = compute_mismatch(case9q, state)
    np.testing.assert_allclose(mis.stacked, expected, atol=1e-12)
    assert len(mis.stacked) == (9 - 1) + 6


def test_mismatch_zero_on_idle_two_bus():
    case = lossless_two_bus()
    mis = compute_mismatch(case, PowerFlowState.from_case(case))
    np.testing.assert_allclose(mis.stacked, 0, atol=1e-15)


def fd_jacobian(case, state, h=1e-6):
    """Central differences of [P_ns; Q_pq] in (angle, relative magnitude)."""
    net = case.network
    y = build_ybus(net)
    ns, pq = net.non_slack, net.pq

    def f(vm, va):
        p, q = complex_injections(y.y, PowerFlowState(vm, va))
        return np.concatenate([p[ns], q[pq]])

    cols = []
    for k in ns:
        up, dn = state.v_ang.copy(), state.v_ang.copy()
        up[k] += h
        dn[k] -= h
        cols.append((f(state.v_mag, up) - f(state.v_mag, dn)) / (2 * h))
    for k in pq:
        up, dn = state.v_mag.copy(), state.v_mag.copy()
        up[k] *= 1 + h
        dn[k] *= 1 - h
        cols.append((f(up, state.v_ang) - f(dn, state.v_ang)) / (2 * h))
    return np.column_stack(cols)


@pytest.mark.parametrize("name", ["case3", "case9q"])
def test_jacobian_finite_differences(name, request, rng):
    case = request.getfixturevalue(name)
    for _ in range(5):
        state = random_state(case, rng)
        j = build_jacobian(case, state).j
        fd = fd_jacobian(case, state)
        assert np.all(np.abs(j - fd) <= 1e-6 * np.maximum(np.abs(j), 1.0))


def test_two_bus_jacobian_diagonal():
    case = lossless_two_bus()
    j = build_jacobian(case, PowerFlowState.from_case(case)).j
    assert j.shape == (2, 2)
    assert j[0, 0] == pytest.approx(1.0)


def test_jacobian_order_case9q(case9q):
    j = build_jacobian(case9q, PowerFlowState.from_case(case9q))
    assert j.order == 8 + len(case9q.network.pq) == 14


def test_case3_textbook_solution(case3):
    rep = nr_solve(case3, LUSolver())
    assert rep.converged and rep.iterations == 4
    vm, va = rep.final_state.v_mag, np.degrees(rep.final_state.v_ang)
    assert vm[1] == pytest.approx(0.97168, abs=1e-5)
    assert va[1] == pytest.approx(-2.696, abs=1e-3)
    assert va[2] == pytest.approx(-0.4988, abs=1e-4)
    assert rep.p[0] * 100 == pytest.approx(218.423, abs=1e-3)
    assert rep.q[0] * 100 == pytest.approx(140.852, abs=1e-3)


def test_case9q_solution(case9q):
    rep = nr_solve(case9q, LUSolver())
    assert rep.converged
    # generator outputs of the published case9 power flow with unit voltage set points
    assert rep.p[0] * 100 == pytest.approx(71.95, abs=0.01)
    np.testing.assert_allclose(rep.q[:3] * 100, [24.07, 14.46, -3.65], atol=0.01)


@pytest.mark.parametrize("name", ["case3", "case9q"])
def test_converged_properties(name, request):
    case = request.getfixturevalue(name)
    tol = 1e-8
    rep = nr_solve(case, LUSolver(), tol=tol)
    assert rep.converged
    assert rep.per_iteration[-1].step_norm <= tol
    mis = compute_mismatch(case, rep.final_state)
    assert np.max(np.abs(mis.stacked)) <= 10 * tol
    # power balance: net injection equals series + shunt losses, non-negative here
    assert rep.p.sum() >= 0
    v = rep.final_state.voltage
    loss = 0.0
    for br in case.network.branches:
        i = (v[br.from_bus] - v[br.to_bus]) / complex(br.r, br.x)
        loss += abs(i) ** 2 * br.r
    assert rep.p.sum() == pytest.approx(loss, abs=1e-9)
    steps = [r.step_norm for r in rep.per_iteration[-3:]]
    assert steps[0] > steps[1] > steps[2]


def test_fixed_point_converges_in_one(case9q):
    sol = nr_solve(case9q, LUSolver()).final_state
    rep = nr_solve(case9q, LUSolver(), max_iter=1, initial=PowerFlowState(sol.v_mag, sol.v_ang))
    assert rep.converged and rep.iterations == 1
    assert rep.per_iteration[0].step_norm <= 1e-8


class Delegating(LinearSolver):
    name = "hhl-standin"

    def solve(self, a, b):
        return LinearSolution(lu_solve(a, b))


def test_backends_share_control_flow(case9q):
    a = nr_solve(case9q, LUSolver())
    b = nr_solve(case9q, Delegating())
    assert a.iterations == b.iterations
    for ra, rb in zip(a.per_iteration, b.per_iteration):
        np.testing.assert_array_equal(ra.step, rb.step)
        np.testing.assert_array_equal(ra.jacobian, rb.jacobian)
    np.testing.assert_array_equal(a.final_state.v_mag, b.final_state.v_mag)


def test_iteration_limit_is_reported(case9q):
    rep = nr_solve(case9q, LUSolver(), max_iter=2)
    assert not rep.converged and rep.status == "max_iter" and rep.iterations == 2


def test_singular_jacobian_is_reported():
    case = make_case([Bus(0, BusKind.SLACK, v_mag=1.0), Bus(1, BusKind.PQ), Bus(2, BusKind.PQ, p_demand=0.1)],
                     [Branch(0, 1, 0.0, 0.1)])
    rep = nr_solve(case, LUSolver())
    assert rep.status == "singular" and not rep.converged
    assert "pivot" in rep.message or "zero" in rep.message


def test_infeasible_load_does_not_converge():
    case = lossless_two_bus(p_demand=5.0, q_demand=2.0)
    rep = nr_solve(case, LUSolver(), max_iter=30)
    assert not rep.converged
    assert rep.status in ("diverged", "max_iter", "singular")


def test_bad_arguments(case3):
    with pytest.raises(ValueError):
        nr_solve(case3, LUSolver(), tol=0)
    with pytest.raises(ValueError):
        nr_solve(case3, LUSolver(), max_iter=0)


def test_report_serialises(case3):
    import json

    d = json.loads(json.dumps(nr_solve(case3, LUSolver()).to_dict()))
    assert d["converged"] and d["bus_ids"] == [1, 2, 3]
    assert d["p_mw"][0] == pytest.approx(218.423, abs=1e-3)
