"""Case file ingestion: MATPOWER ``.m`` files, the native JSON format, and the
embedded cases.

Only the literal-matrix subset of MATPOWER is understood: ``mpc.baseMVA`` and
the ``mpc.bus``, ``mpc.gen`` and ``mpc.branch`` tables written out as numbers.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .network import Branch, Bus, BusKind, Network, NetworkError


class CaseFormatError(ValueError):
    """Raised for unreadable or inconsistent case input."""


@dataclass(frozen=True)
class CaseFile:
    name: str
    network: Network
    # per-bus (v_mag, v_ang) initial guess
    flat_start: tuple[tuple[float, float], ...]
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "flat_start", tuple((float(v), float(a)) for v, a in self.flat_start))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        if len(self.flat_start) != self.network.n:
            raise CaseFormatError(
                f"flat_start has {len(self.flat_start)} entries for {self.network.n} buses"
            )


def flat_start(network: Network) -> tuple[tuple[float, float], ...]:
    """Initial guess: set points where specified, 1.0 pu / 0 rad otherwise."""
    out = []
    for bus in network.buses:
        if bus.kind is BusKind.SLACK:
            out.append((bus.v_mag, bus.v_ang))
        elif bus.kind is BusKind.PV:
            out.append((bus.v_mag, 0.0))
        else:
            out.append((1.0, 0.0))
    return tuple(out)


# MATPOWER ------------------------------------------------------------------

_BUS_TYPES = {1: BusKind.PQ, 2: BusKind.PV, 3: BusKind.SLACK}
_KNOWN_KEYS = {"baseMVA", "bus", "gen", "branch", "version"}

_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\]\s*;?", re.DOTALL)
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([^\[\s;][^;\n]*)\s*;?")


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_matrix(name: str, body: str) -> list[list[float]]:
    rows = []
    for chunk in re.split(r"[;\n]", body):
        chunk = chunk.replace(",", " ").strip()
        if not chunk:
            continue
        try:
            rows.append([float(tok) for tok in chunk.split()])
        except ValueError as exc:
            raise CaseFormatError(f"mpc.{name}: non-numeric entry in row {chunk!r}") from exc
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise CaseFormatError(f"mpc.{name}: rows have differing lengths {sorted(widths)}")
    return rows


def _require_cols(name: str, rows: list[list[float]], ncols: int) -> None:
    if rows and len(rows[0]) < ncols:
        raise CaseFormatError(f"mpc.{name}: expected at least {ncols} columns, got {len(rows[0])}")


def parse_matpower(text: str, name: str = "case") -> CaseFile:
    """Parse MATPOWER case text into a :class:`CaseFile`.

    Buses are renumbered 0..n-1 in table order; the original ``bus_i`` is kept
    as ``Bus.external_id``. Powers are converted to per unit on ``baseMVA`` and
    angles to radians. In-service generators are merged onto their buses.
    """
    body = _strip_comments(text)
    matrices: dict[str, list[list[float]]] = {}
    for match in _MATRIX_RE.finditer(body):
        matrices[match.group(1)] = _parse_matrix(match.group(1), match.group(2))
    scalars = {}
    for match in _SCALAR_RE.finditer(body):
        scalars[match.group(1)] = match.group(2).strip()
    m = re.search(r"function\s+\w+\s*=\s*(\w+)", body)
    if m and name == "case":
        name = m.group(1)

    warnings: list[str] = []
    for key in sorted(set(matrices) - _KNOWN_KEYS):
        warnings.append(f"ignored matrix mpc.{key}")
    for key in ("bus", "gen", "branch"):
        if key not in matrices:
            raise CaseFormatError(f"missing required matrix mpc.{key}")
    if "baseMVA" not in scalars:
        raise CaseFormatError("missing required matrix mpc.baseMVA")
    try:
        base_mva = float(scalars["baseMVA"])
    except ValueError as exc:
        raise CaseFormatError(f"mpc.baseMVA is not a number: {scalars['baseMVA']!r}") from exc

    bus_rows, gen_rows, branch_rows = matrices["bus"], matrices["gen"], matrices["branch"]
    _require_cols("bus", bus_rows, 9)
    _require_cols("gen", gen_rows, 8)
    _require_cols("branch", branch_rows, 4)
    if not bus_rows:
        raise CaseFormatError("mpc.bus is empty")

    index: dict[int, int] = {}
    for k, row in enumerate(bus_rows):
        ext = int(row[0])
        if ext in index:
            raise CaseFormatError(f"mpc.bus: duplicate bus number {ext}")
        index[ext] = k

    kinds = []
    for row in bus_rows:
        code = int(row[1])
        if code not in _BUS_TYPES:
            raise CaseFormatError(f"mpc.bus: bus {int(row[0])} has unsupported type {code}")
        kinds.append(_BUS_TYPES[code])
    n_slack = kinds.count(BusKind.SLACK)
    if n_slack == 0:
        raise CaseFormatError("validation: no slack (type 3) bus")
    if n_slack > 1:
        raise CaseFormatError(f"validation: {n_slack} slack (type 3) buses, expected one")

    p_gen = [0.0] * len(bus_rows)
    q_gen = [0.0] * len(bus_rows)
    v_set: list[float | None] = [None] * len(bus_rows)
    for row in gen_rows:
        ext = int(row[0])
        if ext not in index:
            raise CaseFormatError(f"mpc.gen: generator at unknown bus {ext}")
        if row[7] <= 0:
            warnings.append(f"generator at bus {ext} is out of service, skipped")
            continue
        k = index[ext]
        p_gen[k] += row[1] / base_mva
        q_gen[k] += row[2] / base_mva
        if v_set[k] is None:
            v_set[k] = row[5]

    buses = []
    for k, row in enumerate(bus_rows):
        kind = kinds[k]
        if kind is BusKind.PV and v_set[k] is None:
            warnings.append(f"bus {int(row[0])} is type PV without a generator, treated as PQ")
            kind = BusKind.PQ
        v_mag = v_set[k] if (kind is not BusKind.PQ and v_set[k] is not None) else row[7]
        buses.append(
            Bus(
                id=k,
                kind=kind,
                p_demand=row[2] / base_mva,
                q_demand=row[3] / base_mva,
                p_gen=p_gen[k],
                q_gen=q_gen[k],
                v_mag=v_mag,
                v_ang=math.radians(row[8]),
                shunt_g=row[4] / base_mva,
                shunt_b=row[5] / base_mva,
                external_id=int(row[0]),
            )
        )

    branches = []
    for row in branch_rows:
        f, t = int(row[0]), int(row[1])
        for end in (f, t):
            if end not in index:
                raise CaseFormatError(f"mpc.branch: branch {f}-{t} references unknown bus {end}")
        if len(row) > 10 and row[10] <= 0:
            warnings.append(f"branch {f}-{t} is out of service, skipped")
            continue
        tap = row[8] if len(row) > 8 and row[8] != 0 else 1.0
        shift = math.radians(row[9]) if len(row) > 9 else 0.0
        branches.append(
            Branch(
                from_bus=index[f],
                to_bus=index[t],
                r=row[2],
                x=row[3],
                b_charge=row[4] if len(row) > 4 else 0.0,
                tap=tap,
                shift=shift,
            )
        )

    try:
        network = Network(buses=tuple(buses), branches=tuple(branches), base_mva=base_mva)
    except NetworkError as exc:
        raise CaseFormatError(f"validation: {exc}") from exc
    return CaseFile(name=name, network=network, flat_start=flat_start(network), warnings=tuple(warnings))


# Native JSON ---------------------------------------------------------------

_NUM = {"type": "number"}
CASE_SCHEMA = {
    "type": "object",
    "required": ["name", "base_mva", "buses", "branches", "flat_start"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": "qflow-case/1"},
        "name": {"type": "string"},
        "base_mva": {"type": "number", "exclusiveMinimum": 0},
        "buses": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "kind"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "kind": {"enum": [k.value for k in BusKind]},
                    "p_demand": _NUM,
                    "q_demand": _NUM,
                    "p_gen": _NUM,
                    "q_gen": _NUM,
                    "v_mag": _NUM,
                    "v_ang": _NUM,
                    "shunt_g": _NUM,
                    "shunt_b": _NUM,
                    "external_id": {"type": ["integer", "null"]},
                },
            },
        },
        "branches": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["from_bus", "to_bus", "r", "x"],
                "additionalProperties": False,
                "properties": {
                    "from_bus": {"type": "integer", "minimum": 0},
                    "to_bus": {"type": "integer", "minimum": 0},
                    "r": _NUM,
                    "x": _NUM,
                    "b_charge": _NUM,
                    "tap": {"type": "number", "exclusiveMinimum": 0},
                    "shift": _NUM,
                },
            },
        },
        "flat_start": {
            "type": "array",
            "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        },
        "warnings": {"type": "array", "items": {"type": "string"}},
    },
}

_BUS_FIELDS = ("p_demand", "q_demand", "p_gen", "q_gen", "v_mag", "v_ang", "shunt_g", "shunt_b")


def case_to_dict(case: CaseFile) -> dict:
    net = case.network
    return {
        "format": "qflow-case/1",
        "name": case.name,
        "base_mva": net.base_mva,
        "buses": [
            {"id": b.id, "kind": b.kind.value, **{f: getattr(b, f) for f in _BUS_FIELDS},
             "external_id": b.external_id}
            for b in net.buses
        ],
        "branches": [
            {"from_bus": br.from_bus, "to_bus": br.to_bus, "r": br.r, "x": br.x,
             "b_charge": br.b_charge, "tap": br.tap, "shift": br.shift}
            for br in net.branches
        ],
        "flat_start": [list(vs) for vs in case.flat_start],
        "warnings": list(case.warnings),
    }


def emit_json(case: CaseFile) -> str:
    return json.dumps(case_to_dict(case), indent=2)


def case_from_dict(data: dict) -> CaseFile:
    validator = jsonschema.Draft202012Validator(CASE_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise CaseFormatError(f"{path}: {err.message}")
    try:
        buses = tuple(
            Bus(id=b["id"], kind=BusKind(b["kind"]), external_id=b.get("external_id"),
                **{f: float(b[f]) for f in _BUS_FIELDS if f in b})
            for b in data["buses"]
        )
        branches = tuple(
            Branch(**{k: (float(v) if k not in ("from_bus", "to_bus") else v) for k, v in br.items()})
            for br in data["branches"]
        )
        network = Network(buses=buses, branches=branches, base_mva=float(data["base_mva"]))
    except NetworkError as exc:
        raise CaseFormatError(f"validation: {exc}") from exc
    return CaseFile(
        name=data["name"],
        network=network,
        flat_start=tuple(tuple(vs) for vs in data["flat_start"]),
        warnings=tuple(data.get("warnings", ())),
    )


def parse_json(text: str) -> CaseFile:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"<root>: invalid JSON ({exc})") from exc
    return case_from_dict(data)


# Embedded cases ------------------------------------------------------------

BUILTIN_FILES = {"case3": "case3.m", "case9q": "case9Q.m"}


def builtin_case(key: str) -> CaseFile:
    try:
        filename = BUILTIN_FILES[key.lower()]
    except KeyError:
        raise CaseFormatError(f"unknown builtin case {key!r}; choose from {sorted(BUILTIN_FILES)}") from None
    text = resources.files("qflow").joinpath("data", filename).read_text()
    return parse_matpower(text, name=Path(filename).stem)


def builtin_cases() -> list[CaseFile]:
    """The two embedded benchmark cases: Case 3 and Case 9Q, in that order."""
    return [builtin_case("case3"), builtin_case("case9q")]


def load_case(ref: str) -> CaseFile:
    """Load ``builtin:<name>``, a ``.m`` MATPOWER file, or a ``.json`` case file."""
    if ref.startswith("builtin:"):
        return builtin_case(ref.split(":", 1)[1])
    path = Path(ref)
    if not path.is_file():
        raise CaseFormatError(f"case file not found: {ref}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return parse_json(text)
    return parse_matpower(text, name=path.stem)
