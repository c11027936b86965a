"""Exact dense statevector simulator.

Qubit ordering is little-endian: qubit ``i`` is bit ``i`` of the amplitude
index, and a register ``(first, size)`` reads its integer value from bits
``first .. first+size-1`` with ``first`` least significant. Multi-qubit gate
matrices use the same convention over their ``targets`` tuple.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

UNITARY_ATOL = 1e-10

H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def phase(angle: float) -> np.ndarray:
    return np.diag([1.0, np.exp(1j * angle)])


def ry(angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def is_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0])), initial=0.0) <= atol)


@dataclass(frozen=True)
class QuantumState:
    amplitudes: np.ndarray
    registers: dict = field(default_factory=dict)  # name -> (first qubit, size)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        q = int(round(math.log2(amps.size))) if amps.size else -1
        if q < 0 or amps.size != 1 << q:
            raise ValueError(f"amplitude vector length {amps.size} is not a power of two")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "registers", dict(self.registers))

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @classmethod
    def zero(cls, num_qubits: int, registers: dict | None = None) -> "QuantumState":
        amps = np.zeros(1 << num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps, registers or {})

    @classmethod
    def basis(cls, index: int, num_qubits: int, registers: dict | None = None) -> "QuantumState":
        amps = np.zeros(1 << num_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps, registers or {})

    def qubits(self, register: str) -> tuple[int, ...]:
        first, size = self.registers[register]
        return tuple(range(first, first + size))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def with_amplitudes(self, amps: np.ndarray) -> "QuantumState":
        return QuantumState(amps, self.registers)

    def register_probabilities(self, register: str) -> np.ndarray:
        """Marginal distribution of the integer value held by ``register``."""
        return marginal(self, self.qubits(register))


def _tensor(amps: np.ndarray, q: int) -> np.ndarray:
    return amps.reshape((2,) * q) if q else amps.reshape(())


def _axis(qubit: int, q: int) -> int:
    return q - 1 - qubit


def _check_qubits(q: int, qubits: Sequence[int]) -> None:
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"qubit indices must be distinct, got {tuple(qubits)}")
    for k in qubits:
        if not 0 <= k < q:
            raise ValueError(f"qubit {k} out of range for a {q}-qubit state")


def _grouped(amps: np.ndarray, q: int, front: Sequence[int], back: Sequence[int]):
    """View the state as (2**len(front), rest, 2**len(back)).

    ``front`` and ``back`` are given least-significant first; the flattened
    index on each side follows the same little-endian convention.
    """
    t = _tensor(amps, q)
    src = [_axis(k, q) for k in reversed(front)] + [_axis(k, q) for k in reversed(back)]
    dst = list(range(len(front))) + list(range(q - len(back), q))
    moved = np.moveaxis(t, src, dst)
    shape = moved.shape
    return moved.reshape(1 << len(front), -1, 1 << len(back)), shape, src, dst


def _ungroup(grouped: np.ndarray, shape, src, dst) -> np.ndarray:
    return np.moveaxis(grouped.reshape(shape), dst, src).reshape(-1)


@dataclass(frozen=True)
class Gate:
    matrix: np.ndarray
    targets: tuple[int, ...]
    controls: tuple[int, ...] = ()
    label: str = "U"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "controls", tuple(int(c) for c in self.controls))
        if m.shape != (1 << len(self.targets),) * 2:
            raise ValueError(f"{self.label}: matrix shape {m.shape} does not fit {len(self.targets)} targets")
        if not is_unitary(m):
            raise ValueError(f"{self.label}: matrix is not unitary within {UNITARY_ATOL}")
        if set(self.targets) & set(self.controls):
            raise ValueError(f"{self.label}: targets and controls overlap")

    def adjoint(self) -> "Gate":
        label = self.label[:-1] if self.label.endswith("†") else self.label + "†"
        return Gate(self.matrix.conj().T, self.targets, self.controls, label)

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.controls + self.targets

    def apply(self, amps: np.ndarray, q: int) -> np.ndarray:
        _check_qubits(q, self.qubits)
        m = self.matrix
        diag = np.diag(m)
        g, shape, src, dst = _grouped(np.array(amps, dtype=complex), q, self.controls, self.targets)
        if np.array_equal(m, np.diag(diag)):
            g[-1] *= diag
        else:
            g[-1] = g[-1] @ m.T
        return _ungroup(g, shape, src, dst)

    def describe(self) -> str:
        ctrl = f" ctrl={list(self.controls)}" if self.controls else ""
        return f"{self.label} targets={list(self.targets)}{ctrl}"


@dataclass(frozen=True)
class UniformlyControlledRY:
    """RY on ``target`` whose angle is ``angles[k]`` when ``controls`` hold ``k``.

    Equivalent to ``2**len(controls)`` multi-controlled RY gates, applied in a
    single pass.
    """

    angles: np.ndarray
    target: int
    controls: tuple[int, ...]
    label: str = "UCRY"

    def __post_init__(self):
        a = np.array(self.angles, dtype=float)
        a.flags.writeable = False
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "controls", tuple(int(c) for c in self.controls))
        if a.shape != (1 << len(self.controls),):
            raise ValueError(f"{self.label}: need {1 << len(self.controls)} angles, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError(f"{self.label}: angles must be finite")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.controls + (self.target,)

    def adjoint(self) -> "UniformlyControlledRY":
        label = self.label[:-1] if self.label.endswith("†") else self.label + "†"
        return UniformlyControlledRY(-self.angles, self.target, self.controls, label)

    def apply(self, amps: np.ndarray, q: int) -> np.ndarray:
        _check_qubits(q, self.qubits)
        g, shape, src, dst = _grouped(np.array(amps, dtype=complex), q, self.controls, (self.target,))
        c = np.cos(self.angles / 2)[:, None]
        s = np.sin(self.angles / 2)[:, None]
        x0, x1 = g[..., 0].copy(), g[..., 1].copy()
        g[..., 0] = c * x0 - s * x1
        g[..., 1] = s * x0 + c * x1
        return _ungroup(g, shape, src, dst)

    def describe(self) -> str:
        return f"{self.label} target={self.target} ctrl={list(self.controls)}"


Operation = Gate | UniformlyControlledRY


class Circuit:
    """An ordered list of operations."""

    def __init__(self, ops: Iterable[Operation] = ()):
        self.ops: list[Operation] = list(ops)

    def append(self, op: Operation) -> "Circuit":
        self.ops.append(op)
        return self

    def extend(self, ops: Iterable[Operation]) -> "Circuit":
        self.ops.extend(ops.ops if isinstance(ops, Circuit) else ops)
        return self

    def inverse(self) -> "Circuit":
        return Circuit(op.adjoint() for op in reversed(self.ops))

    def __len__(self) -> int:
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)

    def run(self, state: QuantumState) -> QuantumState:
        amps = state.amplitudes
        q = state.num_qubits
        for op in self.ops:
            amps = op.apply(amps, q)
        return state.with_amplitudes(amps)

    def dump(self) -> str:
        """One line per operation, for debugging."""
        return "\n".join(op.describe() for op in self.ops)


def apply_gate(state: QuantumState, gate: Operation) -> QuantumState:
    return state.with_amplitudes(gate.apply(state.amplitudes, state.num_qubits))


def _register_qubits(state: QuantumState, register) -> tuple[int, ...]:
    if isinstance(register, str):
        return state.qubits(register)
    return tuple(register)


def qft_circuit(qubits: Sequence[int]) -> Circuit:
    """QFT|j> = N**-0.5 * sum_k exp(2*pi*i*j*k/N)|k> on ``qubits`` (LSB first).

    Emits n Hadamards, n(n-1)/2 controlled phases and floor(n/2) swaps.
    """
    qubits = tuple(qubits)
    n = len(qubits)
    circ = Circuit()
    for j in reversed(range(n)):
        circ.append(Gate(H, (qubits[j],), label="H"))
        for k in reversed(range(j)):
            circ.append(Gate(phase(math.pi / (1 << (j - k))), (qubits[j],), (qubits[k],), label=f"CP(pi/{1 << (j - k)})"))
    for i in range(n // 2):
        circ.append(Gate(SWAP, (qubits[i], qubits[n - 1 - i]), label="SWAP"))
    return circ


def qft(state: QuantumState, register) -> QuantumState:
    return qft_circuit(_register_qubits(state, register)).run(state)


def qft_dagger(state: QuantumState, register) -> QuantumState:
    return qft_circuit(_register_qubits(state, register)).inverse().run(state)


def qpe_circuit(powers: Sequence[np.ndarray], target: Sequence[int], clock: Sequence[int]) -> Circuit:
    """Phase estimation: H on the clock, clock qubit ``k`` controls
    ``powers[k]`` (= U**(2**k)) on ``target``, then inverse QFT on the clock."""
    if len(powers) != len(clock):
        raise ValueError("need one controlled power per clock qubit")
    circ = Circuit(Gate(H, (c,), label="H") for c in clock)
    for k, (c, uk) in enumerate(zip(clock, powers)):
        circ.append(Gate(uk, tuple(target), (c,), label=f"U^{1 << k}"))
    circ.extend(qft_circuit(clock).inverse())
    return circ


def unitary_powers(u: np.ndarray, m: int) -> list[np.ndarray]:
    """``[u, u**2, u**4, ..., u**(2**(m-1))]`` by repeated squaring."""
    out = [np.asarray(u, dtype=complex)]
    for _ in range(m - 1):
        out.append(out[-1] @ out[-1])
    return out


def qpe(
    u: np.ndarray,
    psi: np.ndarray,
    m: int,
    powers: Callable[[int], np.ndarray] | None = None,
) -> QuantumState:
    """Run phase estimation of ``u`` on input ``psi`` with ``m`` clock qubits.

    The returned state has registers ``target`` (qubits 0..n-1) and ``clock``
    (qubits n..n+m-1). If ``psi`` is an eigenvector with eigenvalue
    exp(2*pi*i*a/2**m), the clock holds ``a`` with certainty. ``powers(k)``
    may supply U**(2**k) directly; by default it is built by squaring.
    """
    u = np.asarray(u, dtype=complex)
    if m < 1:
        raise ValueError("m must be at least 1")
    if not is_unitary(u):
        raise ValueError("u is not unitary")
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (u.shape[0],):
        raise ValueError(f"psi has shape {psi.shape}, expected ({u.shape[0]},)")
    if abs(np.linalg.norm(psi) - 1) > UNITARY_ATOL:
        raise ValueError("psi must be normalized")
    n = u.shape[0].bit_length() - 1
    if u.shape[0] != 1 << n:
        raise ValueError("u must act on a whole number of qubits")
    pw = unitary_powers(u, m) if powers is None else [powers(k) for k in range(m)]
    registers = {"target": (0, n), "clock": (n, m)}
    amps = np.kron(QuantumState.zero(m).amplitudes, psi)
    state = QuantumState(amps, registers)
    return qpe_circuit(pw, state.qubits("target"), state.qubits("clock")).run(state)


def hamiltonian_unitary(a: np.ndarray, t: float) -> np.ndarray:
    """exp(i*a*t) for Hermitian ``a`` via its eigendecomposition."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("a must be square")
    if np.max(np.abs(a - a.conj().T), initial=0.0) > 1e-10:
        raise ValueError("a is not Hermitian")
    lam, vec = np.linalg.eigh(a)
    return (vec * np.exp(1j * lam * t)) @ vec.conj().T


def marginal(state: QuantumState, qubits: Sequence[int]) -> np.ndarray:
    """Probability of each integer value on ``qubits`` (LSB first)."""
    qubits = tuple(qubits)
    _check_qubits(state.num_qubits, qubits)
    g, *_ = _grouped(np.array(state.amplitudes), state.num_qubits, qubits, ())
    return np.sum(np.abs(g) ** 2, axis=(1, 2))


def project(state: QuantumState, qubits: Sequence[int], value: int) -> np.ndarray:
    """Unnormalized amplitudes of the remaining qubits given ``qubits`` == ``value``.

    The result is indexed little-endian over the qubits not in ``qubits``.
    """
    qubits = tuple(qubits)
    _check_qubits(state.num_qubits, qubits)
    g, *_ = _grouped(np.array(state.amplitudes), state.num_qubits, qubits, ())
    rest = g[value, :, 0]
    # rest is ordered MSB-first over remaining axes, which is the same little-endian index
    return rest.copy()


@dataclass(frozen=True)
class Measurement:
    probabilities: tuple[float, float]
    states: tuple[QuantumState | None, QuantumState | None]


def measure_qubit(state: QuantumState, qubit: int) -> Measurement:
    """Exact outcome distribution of a Z measurement and both collapsed states.

    A branch with zero probability has no post-measurement state (``None``).
    """
    _check_qubits(state.num_qubits, (qubit,))
    idx = np.arange(state.amplitudes.size)
    bit = (idx >> qubit) & 1
    probs, states = [], []
    for outcome in (0, 1):
        amps = np.where(bit == outcome, state.amplitudes, 0)
        p = float(np.sum(np.abs(amps) ** 2))
        probs.append(p)
        states.append(state.with_amplitudes(amps / math.sqrt(p)) if p > 1e-300 else None)
    return Measurement((probs[0], probs[1]), (states[0], states[1]))
