"""Case ingestion (IEEE Common Data Format, native JSON) and report output."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .exceptions import CaseParseError
from .model import Branch, BranchKind, Bus, BusKind, Generator, Load, NetworkCase

__all__ = [
    "NetworkCase",
    "SolutionReport",
    "BusResult",
    "GenResult",
    "parse_cdf",
    "parse_native",
    "serialize",
    "read_case",
    "load_case",
    "write_solution",
    "read_solution",
]

# 1-based inclusive column ranges of the 1973 format
_TITLE_FIELDS = {"base_mva": (32, 37, float), "case_id": (46, 73, str)}
_BUS_FIELDS = {
    "number": (1, 4, int),
    "type": (25, 26, int),
    "final_volts": (28, 33, float),
    "final_angle": (34, 40, float),
    "load_mw": (41, 49, float),
    "load_mvar": (50, 59, float),
    "gen_mw": (60, 67, float),
    "gen_mvar": (68, 75, float),
    "desired_volts": (85, 90, float),
    "max_mvar": (91, 98, float),
    "min_mvar": (99, 106, float),
    "shunt_g": (107, 114, float),
    "shunt_b": (115, 122, float),
}
_BRANCH_FIELDS = {
    "tap_bus": (1, 4, int),
    "z_bus": (6, 9, int),
    "type": (19, 19, int),
    "r": (20, 29, float),
    "x": (30, 40, float),
    "b": (41, 50, float),
    "ratio": (77, 82, float),
    "phase_shift": (84, 90, float),
}
_BUS_KINDS = {0: BusKind.PQ, 1: BusKind.PQ, 2: BusKind.PV, 3: BusKind.SLACK}


def _fields(line, lineno, spec, required=()):
    out = {}
    for name, (start, end, conv) in spec.items():
        raw = line[start - 1:end].strip()
        if not raw:
            if name in required:
                raise CaseParseError(f"missing {name} in columns {start}-{end}", line=lineno)
            out[name] = conv() if conv is not str else ""
            continue
        try:
            out[name] = conv(raw)
        except ValueError:
            raise CaseParseError(f"bad {name} {raw!r} in columns {start}-{end}", line=lineno) from None
    return out


def _section(lines, start, title):
    """Collect (lineno, text) rows from ``start`` up to the -999 terminator."""
    rows = []
    for k in range(start, len(lines)):
        text = lines[k]
        if text.strip().startswith("-999"):
            return rows, k + 1
        if text.strip():
            rows.append((k + 1, text))
    raise CaseParseError(f"{title} section not terminated by -999", line=len(lines))


def _find(lines, start, marker):
    for k in range(start, len(lines)):
        if lines[k].upper().startswith(marker):
            return k
    raise CaseParseError(f"no '{marker}' section", line=len(lines))


def parse_cdf(text: str) -> NetworkCase:
    lines = text.splitlines()
    if not lines:
        raise CaseParseError("empty document", line=1)
    title = _fields(lines[0], 1, _TITLE_FIELDS, required=("base_mva",))
    base = title["base_mva"]
    if not base > 0:
        raise CaseParseError("MVA base must be positive", line=1)

    head = _find(lines, 1, "BUS DATA FOLLOWS")
    bus_rows, after = _section(lines, head + 1, "BUS DATA")
    buses, generators, loads = [], [], []
    for lineno, line in bus_rows:
        f = _fields(line, lineno, _BUS_FIELDS, required=("number", "type"))
        if f["type"] not in _BUS_KINDS:
            raise CaseParseError(f"unknown bus type {f['type']}", line=lineno)
        kind = _BUS_KINDS[f["type"]]
        v_target = f["desired_volts"] or f["final_volts"] or 1.0
        buses.append(Bus(
            id=f["number"], kind=kind, v_target=v_target,
            angle_init=math.radians(f["final_angle"]),
            shunt_b=f["shunt_b"], shunt_g=f["shunt_g"],
        ))
        if f["load_mw"] or f["load_mvar"]:
            loads.append(Load(f["number"], f["load_mw"] / base, f["load_mvar"] / base))
        if kind is not BusKind.PQ or f["gen_mw"] or f["gen_mvar"]:
            q_min, q_max = -math.inf, math.inf
            # zero/zero limits mean unconstrained; PQ-bus limit columns hold other data
            if kind is not BusKind.PQ and (f["max_mvar"] or f["min_mvar"]):
                q_min, q_max = f["min_mvar"] / base, f["max_mvar"] / base
            generators.append(Generator(f["number"], f["gen_mw"] / base, f["gen_mvar"] / base, q_min, q_max))

    head = _find(lines, after, "BRANCH DATA FOLLOWS")
    branch_rows, _ = _section(lines, head + 1, "BRANCH DATA")
    known = {b.id for b in buses}
    branches = []
    for lineno, line in branch_rows:
        f = _fields(line, lineno, _BRANCH_FIELDS, required=("tap_bus", "z_bus", "x"))
        for end in (f["tap_bus"], f["z_bus"]):
            if end not in known:
                raise CaseParseError(f"branch references unknown bus {end}", line=lineno)
        if f["phase_shift"]:
            raise CaseParseError("phase-shifting transformers are not supported", line=lineno)
        if f["type"] == 0:
            branches.append(Branch(f["tap_bus"], f["z_bus"], f["r"], f["x"], f["b"]))
        else:
            branches.append(Branch(f["tap_bus"], f["z_bus"], f["r"], f["x"], f["b"],
                                   tap=f["ratio"] or 1.0, kind=BranchKind.TRANSFORMER))
    return NetworkCase(buses=buses, branches=branches, generators=generators, loads=loads,
                       base_mva=base, name=title["case_id"])


_NUM = {"type": "number"}
_LIMIT = {"type": ["number", "null"]}
CASE_SCHEMA = {
    "type": "object",
    "required": ["base_mva", "buses", "branches"],
    "properties": {
        "name": {"type": "string"},
        "base_mva": {"type": "number", "exclusiveMinimum": 0},
        "buses": {"type": "array", "minItems": 1, "items": {
            "type": "object",
            "required": ["id", "kind"],
            "additionalProperties": False,
            "properties": {
                "id": {"type": "integer"},
                "kind": {"enum": [k.value for k in BusKind]},
                "v_target": _NUM, "angle_init": _NUM, "shunt_b": _NUM, "shunt_g": _NUM,
            },
        }},
        "branches": {"type": "array", "items": {
            "type": "object",
            "required": ["from_bus", "to_bus", "r", "x"],
            "additionalProperties": False,
            "properties": {
                "from_bus": {"type": "integer"}, "to_bus": {"type": "integer"},
                "r": _NUM, "x": _NUM, "b_charging": _NUM, "tap": _NUM,
                "kind": {"enum": [k.value for k in BranchKind]},
            },
        }},
        "generators": {"type": "array", "items": {
            "type": "object",
            "required": ["bus"],
            "additionalProperties": False,
            "properties": {
                "bus": {"type": "integer"}, "p_g": _NUM, "q_g": _NUM,
                "q_min": _LIMIT, "q_max": _LIMIT,
            },
        }},
        "loads": {"type": "array", "items": {
            "type": "object",
            "required": ["bus"],
            "additionalProperties": False,
            "properties": {"bus": {"type": "integer"}, "p_l": _NUM, "q_l": _NUM},
        }},
    },
}


def _limit(value, default):
    return default if value is None else value


def parse_native(text: str) -> NetworkCase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(exc.msg, line=exc.lineno) from None
    errors = sorted(jsonschema.Draft202012Validator(CASE_SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        raise CaseParseError(errors[0].message, path=errors[0].json_path)

    buses = [Bus(**b) for b in doc["buses"]]
    known = {b.id for b in buses}
    for group, keys in (("branches", ("from_bus", "to_bus")), ("generators", ("bus",)), ("loads", ("bus",))):
        for k, item in enumerate(doc.get(group, [])):
            for key in keys:
                if item[key] not in known:
                    raise CaseParseError(f"unknown bus id {item[key]}", path=f"$.{group}[{k}].{key}")
    generators = [
        Generator(**{**g, "q_min": _limit(g.get("q_min"), -math.inf), "q_max": _limit(g.get("q_max"), math.inf)})
        for g in doc.get("generators", [])
    ]
    return NetworkCase(
        buses=buses,
        branches=[Branch(**b) for b in doc["branches"]],
        generators=generators,
        loads=[Load(**ld) for ld in doc.get("loads", [])],
        base_mva=doc["base_mva"],
        name=doc.get("name", ""),
    )


def serialize(case: NetworkCase) -> str:
    def gen(g):
        d = asdict(g)
        d["q_min"] = None if math.isinf(g.q_min) else g.q_min
        d["q_max"] = None if math.isinf(g.q_max) else g.q_max
        return d

    doc = {
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": [{**asdict(b), "kind": b.kind.value} for b in case.buses],
        "branches": [{**asdict(b), "kind": b.kind.value} for b in case.branches],
        "generators": [gen(g) for g in case.generators],
        "loads": [asdict(ld) for ld in case.loads],
    }
    return json.dumps(doc, indent=1, allow_nan=False)


def read_case(path) -> NetworkCase:
    """Read a case file; ``.cdf``/``.txt`` are IEEE CDF, anything else native JSON."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseParseError(f"cannot read {path}: {exc.strerror}") from None
    if path.suffix.lower() in (".cdf", ".txt"):
        return parse_cdf(text)
    return parse_native(text)


def load_case(name: str) -> NetworkCase:
    """Load a bundled test system: ``"ieee14"`` or ``"ieee118"``."""
    res = resources.files("cipflow") / "data" / f"{name}.cdf"
    if not res.is_file():
        raise ValueError(f"no bundled case named {name!r}")
    return parse_cdf(res.read_text())


@dataclass(frozen=True)
class BusResult:
    id: int
    vm: float
    va: float
    p: float
    q: float


@dataclass(frozen=True)
class GenResult:
    bus: int
    p_g: float
    q_g: float


@dataclass
class SolutionReport:
    method: str
    converged: bool
    buses: list
    generators: list = field(default_factory=list)
    iterations: int = 0
    factorizations: int = 0
    max_mismatch: float = math.nan
    wall_time: float = 0.0
    trace: list = field(default_factory=list)
    events: list = field(default_factory=list)
    case_name: str = ""
    message: str = ""

    @property
    def bus_ids(self) -> np.ndarray:
        return np.array([b.id for b in self.buses])

    @property
    def vm(self) -> np.ndarray:
        return np.array([b.vm for b in self.buses])

    @property
    def va(self) -> np.ndarray:
        return np.array([b.va for b in self.buses])

    @property
    def voltage(self) -> np.ndarray:
        return self.vm * np.exp(1j * self.va)

    def angles(self, ids=None) -> dict:
        keep = None if ids is None else set(ids)
        return {b.id: b.va for b in self.buses if keep is None or b.id in keep}

    def to_dict(self) -> dict:
        return asdict(self)


_META_KEYS = ("case_name", "method", "converged", "iterations", "factorizations", "max_mismatch", "wall_time", "message")


def write_solution(report: SolutionReport, format: str = "json") -> str:
    if format == "json":
        return json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n"
    if format != "csv":
        raise ValueError(f"unknown format {format!r}")
    buf = io.StringIO()
    for key in _META_KEYS:
        buf.write(f"# {key}={getattr(report, key)!r}\n" if key == "message" else f"# {key}={getattr(report, key)}\n")
    buf.write("# trace=" + ";".join(repr(float(t)) for t in report.trace) + "\n")
    for ev in report.events:
        buf.write(f"# event={json.dumps(ev, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bus", "vm_pu", "va_rad", "p_pu", "q_pu"])
    for b in report.buses:
        writer.writerow([b.id, repr(b.vm), repr(b.va), repr(b.p), repr(b.q)])
    return buf.getvalue()


def read_solution(text: str) -> SolutionReport:
    """Inverse of ``write_solution(..., "json")``."""
    doc = json.loads(text)
    doc["buses"] = [BusResult(**b) for b in doc["buses"]]
    doc["generators"] = [GenResult(**g) for g in doc["generators"]]
    return SolutionReport(**doc)
