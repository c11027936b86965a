import math

import numpy as np
import pytest

from qflow.hhl import (
    HhlConfig,
    HHLSolver,
    auto_clock_qubits,
    auto_parameters,
    clock_eigenvalues,
    hermitize,
    hhl_solve,
    pad_to_power_of_two,
    rotation_angles,
)
from qflow.linsolve import LUSolver, SingularMatrixError, lu_solve
from qflow.powerflow import PowerFlowState, build_jacobian, compute_mismatch, nr_solve

from conftest import random_spd

EXAMPLE_A = np.array([[1.0, -1 / 3], [-1 / 3, 1.0]])
EXAMPLE_B = np.array([0.0, 1.0])


def test_hermitize_passes_symmetric():
    a_h, b_h, unembed = hermitize(EXAMPLE_A, EXAMPLE_B)
    assert a_h is EXAMPLE_A
    np.testing.assert_array_equal(unembed(np.array([1.0, 2.0])), [1.0, 2.0])


def test_hermitize_embeds_nonsymmetric(rng):
    a = rng.normal(size=(3, 3))
    b = rng.normal(size=3)
    a_h, b_h, unembed = hermitize(a, b)
    assert a_h.shape == (6, 6)
    np.testing.assert_allclose(a_h, a_h.T)
    y = np.linalg.solve(a_h, b_h)
    np.testing.assert_allclose(unembed(y), np.linalg.solve(a, b), atol=1e-12)


def test_pad_to_power_of_two():
    a = np.diag([2.0, 3.0, 4.0])
    a_p, b_p, dim = pad_to_power_of_two(a, np.ones(3))
    assert a_p.shape == (4, 4) and dim == 3
    np.testing.assert_array_equal(np.diag(a_p), [2, 3, 4, 1])
    np.testing.assert_array_equal(b_p, [1, 1, 1, 0])
    a1, _, _ = pad_to_power_of_two(np.array([[5.0]]), np.ones(1))
    assert a1.shape == (2, 2)
    a4, _, _ = pad_to_power_of_two(np.eye(4), np.ones(4))
    assert a4.shape == (4, 4)


def test_auto_parameters_positive_spectrum():
    t, c = auto_parameters(np.diag([1.0, 4.0]), 4)
    # largest eigenvalue lands on the top clock value 15
    assert 4.0 * t * 16 / (2 * math.pi) == pytest.approx(15)
    assert c == pytest.approx(0.99)


def test_auto_parameters_signed_spectrum():
    t, c = auto_parameters(np.diag([-2.0, 1.0]), 4)
    assert 2.0 * t * 16 / (2 * math.pi) == pytest.approx(7)
    assert c == pytest.approx(0.99)


def test_auto_clock_qubits():
    assert auto_clock_qubits(np.eye(2)) == 2
    assert auto_clock_qubits(np.diag([1.0, 100.0])) == 7
    assert auto_clock_qubits(np.diag([-1.0, 1.0])) == 3


def test_clock_eigenvalues_signed():
    lam = clock_eigenvalues(3, 2 * math.pi / 8, signed=True)
    np.testing.assert_allclose(lam, [0, 1, 2, 3, -4, -3, -2, -1])


def test_rotation_angles_clip_and_skip_zero():
    ang = rotation_angles(2, 2 * math.pi / 4, 1.5, signed=False)
    assert ang[0] == 0.0
    assert ang[1] == pytest.approx(math.pi)  # ratio 1.5 saturates at 1
    assert ang[2] == pytest.approx(2 * math.asin(0.75))


def test_identity_system():
    sol = hhl_solve(np.eye(2), np.array([0.6, 0.8]))
    np.testing.assert_allclose(sol.x, [0.6, 0.8], atol=1e-12)
    assert sol.success_probability == pytest.approx(0.99**2, abs=1e-12)


def test_exact_two_by_two_with_representable_eigenvalues():
    # eigenvalues 2/3 and 4/3 land exactly on clock values 2 and 4
    cfg = HhlConfig(m=3, t=3 * math.pi / 4, c=0.5, auto_scale=False)
    sol = hhl_solve(EXAMPLE_A, EXAMPLE_B, cfg, reference=[3 / 8, 9 / 8])
    np.testing.assert_allclose(sol.x, [3 / 8, 9 / 8], atol=1e-12)
    assert sol.fidelity == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(sorted(sol.diagnostics["eigenvalue_estimates"]), [2, 4])
    # P(ancilla=1) = c^2 * sum |beta_j|^2 / lambda_j^2
    lam, vec = np.linalg.eigh(EXAMPLE_A)
    beta = vec.T @ EXAMPLE_B
    assert sol.success_probability == pytest.approx(0.25 * np.sum(beta**2 / lam**2), abs=1e-12)
    # with exact phases the clock is returned to |0> completely
    assert sol.diagnostics["clock_zero_mass"] == pytest.approx(1.0, abs=1e-12)


def test_exact_diagonal_inversion():
    # eigenvalues 1..4 with t = 2 pi / 8 and m = 3 sit on clock values 1..4
    a = np.diag([1.0, 2.0, 3.0, 4.0])
    b = np.array([1.0, -2.0, 0.5, 3.0])
    cfg = HhlConfig(m=3, t=2 * math.pi / 8, c=0.9, auto_scale=False)
    sol = hhl_solve(a, b, cfg)
    np.testing.assert_allclose(sol.x, b / np.diag(a), atol=1e-8)


def test_example_auto_parameters_close():
    sol = hhl_solve(EXAMPLE_A, EXAMPLE_B, HhlConfig(m=8))
    np.testing.assert_allclose(sol.x, [3 / 8, 9 / 8], rtol=0.02)


def test_nonsymmetric_system():
    a = np.array([[2.0, 1.0], [0.0, 1.0]])
    b = np.array([3.0, 1.0])
    sol = hhl_solve(a, b, HhlConfig(m=8))
    np.testing.assert_allclose(sol.x, [1.0, 1.0], rtol=0.02)
    assert sol.diagnostics["hermitian_size"] == 4


def test_singular_rejected():
    with pytest.raises(SingularMatrixError):
        hhl_solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        hhl_solve(np.eye(2), np.zeros(2))


def test_config_validation():
    with pytest.raises(ValueError):
        HhlConfig(m=0)
    with pytest.raises(ValueError):
        HhlConfig(t=1.0, auto_scale=False)


def _relative_errors(m, trials=20, seed=7):
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(trials):
        a = random_spd(rng, 4)
        b = rng.normal(size=4)
        x = lu_solve(a, b)
        sol = hhl_solve(a, b, HhlConfig(m=m))
        errs.append(np.linalg.norm(sol.x - x) / np.linalg.norm(x))
    return np.array(errs)


def test_precision_improves_with_clock_size():
    medians = [np.median(_relative_errors(m)) for m in (3, 4, 5, 6)]
    assert all(a > b for a, b in zip(medians, medians[1:]))


def test_random_spd_accuracy_with_larger_clock():
    # six clock qubits leave a few percent of phase-estimation leakage; ten reach 1e-2 in every trial
    assert _relative_errors(6).max() < 0.1
    assert _relative_errors(10).max() < 1e-2


def test_padded_case9q_jacobian(case9q):
    state = PowerFlowState.from_case(case9q)
    j = build_jacobian(case9q, state).j
    rhs = compute_mismatch(case9q, state).stacked
    sol = hhl_solve(j, rhs, HhlConfig(m=7))
    assert sol.diagnostics["original_size"] == 14
    assert sol.diagnostics["padded_size"] == 32
    x = lu_solve(j, rhs)
    assert np.linalg.norm(sol.x - x) / np.linalg.norm(x) < 0.05


def test_case3_first_iteration_diff(case3):
    state = PowerFlowState.from_case(case3)
    j = build_jacobian(case3, state).j
    rhs = compute_mismatch(case3, state).stacked
    diff = np.linalg.norm(HHLSolver(HhlConfig(m=6))(j, rhs) - lu_solve(j, rhs))
    assert 1e-5 < diff < 1e-2


def test_hhl_backend_on_identity_matches_lu():
    a = np.eye(4)
    b = np.array([0.1, -0.2, 0.3, 0.4])
    np.testing.assert_allclose(HHLSolver()(a, b), LUSolver()(a, b), atol=1e-12)
    np.testing.assert_array_equal(HHLSolver()(a, np.zeros(4)), np.zeros(4))


def test_hhl_powerflow_case3(case3):
    rep = nr_solve(case3, HHLSolver(HhlConfig(m=6)))
    ref = nr_solve(case3, LUSolver())
    assert rep.converged
    np.testing.assert_allclose(rep.final_state.v_mag, ref.final_state.v_mag, atol=1e-8)
    np.testing.assert_allclose(rep.final_state.v_ang, ref.final_state.v_ang, atol=1e-8)
