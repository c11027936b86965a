"""HHL linear solver built on the statevector simulator.

Register layout (little-endian): the solution register occupies qubits
``0..n-1``, the clock ``n..n+m-1`` and the rotation ancilla is qubit ``n+m``.
Amplitudes are read exactly after post-selecting the ancilla on ``|1>`` and
the clock on ``|0...0>``; the classical vector is then recovered from the
identity ``amplitudes = C * A^-1 b / |b|``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import qsim
from .linsolve import LinearSolution, LinearSolver, SingularMatrixError

SAFETY = 0.99
MIN_SUCCESS = 1e-12


@dataclass(frozen=True)
class HhlConfig:
    """Clock size and scaling for one HHL run.

    ``m=None`` sizes the clock per system with :func:`auto_clock_qubits`. With
    ``auto_scale`` set, ``t`` and ``c`` are derived from the spectrum of
    each system (any values given here are ignored). Otherwise both must be
    given; ``signed`` then says whether clock values ``>= 2**(m-1)`` stand for
    negative eigenvalues (``None`` infers it from the spectrum).
    """

    m: int | None = None
    t: float | None = None
    c: float | None = None
    auto_scale: bool = True
    signed: bool | None = None

    def __post_init__(self):
        if self.m is not None and self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not self.auto_scale:
            if self.t is None or self.c is None:
                raise ValueError("t and c are required when auto_scale is off")
        if self.t is not None and not self.t > 0:
            raise ValueError(f"t must be positive, got {self.t}")
        if self.c is not None and not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")


@dataclass
class HhlSolution:
    x: np.ndarray
    success_probability: float
    fidelity: float | None = None
    diagnostics: dict = field(default_factory=dict)


def _is_symmetric(a: np.ndarray) -> bool:
    scale = max(np.max(np.abs(a), initial=0.0), 1.0)
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= 1e-12 * scale)


def hermitize(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Return a Hermitian system with the same solution.

    Symmetric input passes through. Otherwise the system becomes
    ``[[0, a], [a^T, 0]] @ [y; x] = [b; 0]`` whose lower block is the
    solution of the original one.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"a must be square, got shape {a.shape}")
    if b.shape != (a.shape[0],):
        raise ValueError(f"b has shape {b.shape}, expected ({a.shape[0]},)")
    if _is_symmetric(a):
        return a, b, lambda x: x
    n = a.shape[0]
    zero = np.zeros_like(a)
    a_h = np.block([[zero, a], [a.conj().T, zero]])
    b_h = np.concatenate([b, np.zeros_like(b)])
    return a_h, b_h, lambda x: x[n:]


def pad_to_power_of_two(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Embed into the next power-of-two size (at least 2) with identity padding."""
    dim = a.shape[0]
    size = max(2, 1 << (dim - 1).bit_length())
    if size == dim:
        return a, b, dim
    a_p = np.eye(size, dtype=a.dtype)
    a_p[:dim, :dim] = a
    b_p = np.zeros(size, dtype=b.dtype)
    b_p[:dim] = b
    return a_p, b_p, dim


def _spectrum(a: np.ndarray) -> np.ndarray:
    lam = np.linalg.eigvalsh(a)
    top = np.max(np.abs(lam), initial=0.0)
    if top == 0 or np.min(np.abs(lam)) <= 1e-13 * top:
        raise SingularMatrixError("matrix is singular: zero eigenvalue")
    return lam


def auto_parameters(a: np.ndarray, m: int) -> tuple[float, float]:
    """Evolution time and rotation constant for ``m`` clock qubits.

    ``t`` maps the largest |eigenvalue| onto the top clock value: ``2**m - 1``
    for a positive spectrum, ``2**(m-1) - 1`` when negative eigenvalues force
    the signed (two's complement) clock reading. ``c`` is just below the
    smallest |eigenvalue| so that ``c/lambda`` stays a valid amplitude.
    """
    lam = _spectrum(a)
    top = float(np.max(np.abs(lam)))
    signed = bool(np.min(lam) < 0)
    if signed:
        if m < 2:
            raise ValueError("a spectrum with negative eigenvalues needs m >= 2")
        top_bin = (1 << (m - 1)) - 1
    else:
        top_bin = (1 << m) - 1
    t = 2 * math.pi * top_bin / ((1 << m) * top)
    scaled_min = float(np.min(np.abs(lam))) * t * (1 << m) / (2 * math.pi)
    c = scaled_min * 2 * math.pi / ((1 << m) * t) * SAFETY
    return t, c


def auto_clock_qubits(a: np.ndarray) -> int:
    """Clock size from the padded dimension and the condition number.

    One more qubit than the solution register, or enough to resolve the
    condition number, whichever is larger; plus a sign bit for indefinite
    spectra.
    """
    lam = _spectrum(a)
    kappa = float(np.max(np.abs(lam)) / np.min(np.abs(lam)))
    n_b = max(1, (a.shape[0] - 1).bit_length())
    return max(n_b + 1, math.ceil(math.log2(kappa + 1))) + int(np.min(lam) < 0)


def clock_eigenvalues(m: int, t: float, signed: bool) -> np.ndarray:
    """Eigenvalue decoded from each clock value ``k``."""
    k = np.arange(1 << m, dtype=float)
    if signed:
        k = np.where(k >= 1 << (m - 1), k - (1 << m), k)
    return k * 2 * math.pi / ((1 << m) * t)


def rotation_angles(m: int, t: float, c: float, signed: bool) -> np.ndarray:
    """RY angles putting amplitude ``c/lambda_k`` on the ancilla's ``|1>``.

    Clock value 0 gets no rotation; ratios beyond +-1 (leakage below the
    smallest eigenvalue) saturate.
    """
    lam = clock_eigenvalues(m, t, signed)
    ratio = np.zeros_like(lam)
    nz = lam != 0
    ratio[nz] = np.clip(c / lam[nz], -1.0, 1.0)
    return 2 * np.arcsin(ratio)


def hhl_circuit(a_p: np.ndarray, m: int, t: float, c: float, signed: bool) -> tuple[qsim.Circuit, dict]:
    n = a_p.shape[0].bit_length() - 1
    target = tuple(range(n))
    clock = tuple(range(n, n + m))
    ancilla = n + m
    lam, vec = np.linalg.eigh(a_p)
    powers = [(vec * np.exp(1j * lam * t * (1 << k))) @ vec.conj().T for k in range(m)]
    qpe = qsim.qpe_circuit(powers, target, clock)
    circ = qsim.Circuit()
    circ.extend(qpe)
    circ.append(qsim.UniformlyControlledRY(rotation_angles(m, t, c, signed), ancilla, clock, label="R"))
    circ.extend(qpe.inverse())
    registers = {"b": (0, n), "clock": (n, m), "ancilla": (ancilla, 1)}
    return circ, registers


def hhl_solve(
    a: np.ndarray,
    b: np.ndarray,
    config: HhlConfig = HhlConfig(),
    reference: np.ndarray | None = None,
) -> HhlSolution:
    """Solve ``a @ x = b`` by simulating HHL.

    ``reference``, when given, is the known solution used to report the
    fidelity |<x_ref|x>|^2 of the normalized vectors.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0:
        raise ValueError("b must be nonzero")
    a_h, b_h, unembed = hermitize(a, b)
    lam = _spectrum(a_h)
    a_p, b_p, dim = pad_to_power_of_two(a_h, b_h)
    m = auto_clock_qubits(a_h) if config.m is None else config.m
    if config.auto_scale:
        t, c = auto_parameters(a_h, m)
        signed = bool(np.min(lam) < 0)
    else:
        t, c = float(config.t), float(config.c)
        signed = bool(np.min(lam) < 0) if config.signed is None else config.signed

    circ, registers = hhl_circuit(a_p, m, t, c, signed)
    n = registers["b"][1]
    psi0 = np.zeros(1 << (n + m + 1), dtype=complex)
    psi0[: b_p.size] = b_p / bnorm
    state = circ.run(qsim.QuantumState(psi0, registers))

    ancilla = registers["ancilla"][0]
    clock = state.qubits("clock")
    meas = qsim.measure_qubit(state, ancilla)
    p1 = meas.probabilities[1]
    clock_zero_mass = float(state.register_probabilities("clock")[0])
    if p1 < MIN_SUCCESS:
        raise ArithmeticError(
            f"ancilla success probability {p1:.3e} too small; increase m or change t"
        )
    # post-select ancilla |1>, then clock |0..0>; what remains is the b register
    amps = qsim.project(state, (ancilla,) + clock, 1)
    p_post = float(np.sum(np.abs(amps) ** 2))
    # undo any global phase so the readout is real
    pivot = amps[np.argmax(np.abs(amps))]
    amps = amps * (abs(pivot) / pivot) if pivot != 0 else amps
    x_h = amps.real * (bnorm / c)
    x = np.asarray(unembed(x_h[:dim]), dtype=float)
    if np.linalg.norm(a @ -x - b) < np.linalg.norm(a @ x - b):
        x = -x

    fidelity = None
    if reference is not None:
        ref = np.asarray(reference, dtype=float)
        den = np.linalg.norm(ref) * np.linalg.norm(x)
        fidelity = float((ref @ x) ** 2 / den**2) if den else 0.0

    scaled = lam * t * (1 << m) / (2 * math.pi)
    diagnostics = {
        "m": m,
        "t": t,
        "c": c,
        "signed": signed,
        "padded_size": int(a_p.shape[0]),
        "original_size": int(a.shape[0]),
        "hermitian_size": int(dim),
        "num_qubits": n + m + 1,
        "eigenvalue_estimates": scaled.tolist(),
        "condition": float(np.max(np.abs(lam)) / np.min(np.abs(lam))),
        "p_ancilla": p1,
        "p_postselected": p_post,
        "clock_zero_mass": clock_zero_mass,
    }
    return HhlSolution(x=x, success_probability=p1, fidelity=fidelity, diagnostics=diagnostics)


class HHLSolver(LinearSolver):
    name = "hhl"

    def __init__(self, config: HhlConfig = HhlConfig()):
        self.config = config

    def solve(self, a, b) -> LinearSolution:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if not np.any(b):
            return LinearSolution(np.zeros_like(b), {"residual": 0.0, "skipped": "zero right-hand side"})
        sol = hhl_solve(a, b, self.config)
        diag = dict(sol.diagnostics)
        diag["residual"] = float(np.linalg.norm(a @ sol.x - b) / np.linalg.norm(b))
        return LinearSolution(sol.x, diag)


def hhl_linear_solver(config: HhlConfig = HhlConfig()) -> HHLSolver:
    return HHLSolver(config)
