"""Network model and bus admittance matrix assembly.

Buses are numbered 0..n-1 internally; the id used by the source case file is
kept on each bus as ``external_id``. Y and everything derived from it are
dense, which costs O(n^2) memory and is fine for the small systems this
package targets.
"""
from __future__ import annotations

import cmath
import enum
from dataclasses import dataclass, field

import numpy as np


class NetworkError(ValueError):
    """Raised when a network violates a structural invariant."""


class BusKind(str, enum.Enum):
    SLACK = "slack"
    PV = "pv"
    PQ = "pq"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_demand: float = 0.0
    q_demand: float = 0.0
    p_gen: float = 0.0
    q_gen: float = 0.0
    v_mag: float = 1.0
    v_ang: float = 0.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    external_id: int | None = None

    @property
    def p_spec(self) -> float:
        """Net specified active injection (generation minus demand)."""
        return self.p_gen - self.p_demand

    @property
    def q_spec(self) -> float:
        return self.q_gen - self.q_demand


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charge: float = 0.0
    tap: float = 1.0
    shift: float = 0.0

    @property
    def series_admittance(self) -> complex:
        return 1.0 / complex(self.r, self.x)


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...] = ()
    base_mva: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        self.validate()

    @property
    def n(self) -> int:
        return len(self.buses)

    def validate(self) -> None:
        """Check the structural invariants; raise :class:`NetworkError` on failure."""
        if not self.buses:
            raise NetworkError("network has no buses")
        if self.base_mva <= 0:
            raise NetworkError(f"base_mva must be positive, got {self.base_mva}")
        ids = [b.id for b in self.buses]
        if ids != list(range(len(ids))):
            raise NetworkError(f"bus ids must be 0..{len(ids) - 1} in order, got {ids}")
        slack = [b.id for b in self.buses if b.kind is BusKind.SLACK]
        if len(slack) != 1:
            raise NetworkError(f"expected exactly one slack bus, found {len(slack)}")
        for b in self.buses:
            if b.kind is not BusKind.PQ and not b.v_mag > 0:
                raise NetworkError(f"bus {b.id}: {b.kind.value} bus needs v_mag > 0, got {b.v_mag}")
        n = len(self.buses)
        for k, br in enumerate(self.branches):
            if not (0 <= br.from_bus < n and 0 <= br.to_bus < n):
                raise NetworkError(f"branch {k}: endpoint ({br.from_bus}, {br.to_bus}) is not a bus")
            if br.from_bus == br.to_bus:
                raise NetworkError(f"branch {k}: from_bus equals to_bus ({br.from_bus})")
            if br.r == 0 and br.x == 0:
                raise NetworkError(f"branch {k}: zero series impedance")
            if br.tap <= 0:
                raise NetworkError(f"branch {k}: tap ratio must be positive, got {br.tap}")

    @property
    def slack(self) -> int:
        return next(b.id for b in self.buses if b.kind is BusKind.SLACK)

    @property
    def pv(self) -> np.ndarray:
        return np.array([b.id for b in self.buses if b.kind is BusKind.PV], dtype=int)

    @property
    def pq(self) -> np.ndarray:
        return np.array([b.id for b in self.buses if b.kind is BusKind.PQ], dtype=int)

    @property
    def non_slack(self) -> np.ndarray:
        return np.array([b.id for b in self.buses if b.kind is not BusKind.SLACK], dtype=int)

    def external_ids(self) -> dict[int, int]:
        """Map internal index -> id used by the source file."""
        return {b.id: (b.id if b.external_id is None else b.external_id) for b in self.buses}


@dataclass(frozen=True)
class AdmittanceMatrix:
    y: np.ndarray = field(repr=False)

    @property
    def g(self) -> np.ndarray:
        return self.y.real

    @property
    def b(self) -> np.ndarray:
        return self.y.imag

    @property
    def n(self) -> int:
        return self.y.shape[0]


def build_ybus(network: Network) -> AdmittanceMatrix:
    """Assemble the bus admittance matrix with the standard pi branch model.

    Off-nominal taps and phase shifters follow the usual two-port convention
    with the complex ratio ``tap * exp(j*shift)`` on the from side; the
    from-side shunt (series plus half the charging) is divided by ``tap**2``.
    """
    network.validate()
    n = network.n
    y = np.zeros((n, n), dtype=complex)
    for br in network.branches:
        ys = br.series_admittance
        half_charge = 0.5j * br.b_charge
        ratio = br.tap * cmath.exp(1j * br.shift)
        f, t = br.from_bus, br.to_bus
        y[f, f] += (ys + half_charge) / (br.tap * br.tap)
        y[t, t] += ys + half_charge
        y[f, t] += -ys / ratio.conjugate()
        y[t, f] += -ys / ratio
    for bus in network.buses:
        y[bus.id, bus.id] += complex(bus.shunt_g, bus.shunt_b)
    return AdmittanceMatrix(y)
