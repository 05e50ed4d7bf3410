"""Grid domain types and node admittance matrix assembly.

Every network element is described by its terminal circuit, a 2x2 complex
admittance block relating the currents flowing into its two terminals to the
terminal voltages.  The bus admittance matrix is the sum of those blocks
scattered into bus positions, plus bus shunts on the diagonal.
"""
from __future__ import annotations

import enum
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .exceptions import CaseValidationError


class BusKind(str, enum.Enum):
    SLACK = "Slack"
    PV = "PV"
    PQ = "PQ"


class BranchKind(str, enum.Enum):
    LINE = "Line"
    TRANSFORMER = "Transformer"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind = BusKind.PQ
    v_target: float = 1.0
    angle_init: float = 0.0
    shunt_b: float = 0.0
    shunt_g: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BusKind(self.kind))


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    kind: BranchKind = BranchKind.LINE

    def __post_init__(self):
        object.__setattr__(self, "kind", BranchKind(self.kind))

    def stamp(self) -> np.ndarray:
        if self.kind is BranchKind.TRANSFORMER:
            return transformer_stamp(self.r, self.x, self.tap)
        return line_stamp(self.r, self.x, self.b_charging)


@dataclass(frozen=True)
class Generator:
    bus: int
    p_g: float = 0.0
    q_g: float = 0.0
    q_min: float = -math.inf
    q_max: float = math.inf


@dataclass(frozen=True)
class Load:
    bus: int
    p_l: float = 0.0
    q_l: float = 0.0


@dataclass(frozen=True)
class NetworkCase:
    """Immutable grid description, all quantities in per-unit on ``base_mva``."""

    buses: tuple
    branches: tuple
    generators: tuple = ()
    loads: tuple = ()
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        for attr in ("buses", "branches", "generators", "loads"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def bus_ids(self) -> tuple:
        return tuple(b.id for b in self.buses)

    def index_of(self) -> dict:
        return {b.id: i for i, b in enumerate(self.buses)}

    def slack_index(self) -> int:
        for i, b in enumerate(self.buses):
            if b.kind is BusKind.SLACK:
                return i
        raise CaseValidationError(["no slack bus"])

    def kinds(self) -> np.ndarray:
        return np.array([b.kind.value for b in self.buses])

    def scheduled_power(self) -> np.ndarray:
        """Net complex injection per bus, generation minus load."""
        idx = self.index_of()
        s = np.zeros(self.n_bus, dtype=complex)
        for g in self.generators:
            s[idx[g.bus]] += complex(g.p_g, g.q_g)
        for ld in self.loads:
            s[idx[ld.bus]] -= complex(ld.p_l, ld.q_l)
        return s

    def load_power(self) -> np.ndarray:
        idx = self.index_of()
        s = np.zeros(self.n_bus, dtype=complex)
        for ld in self.loads:
            s[idx[ld.bus]] += complex(ld.p_l, ld.q_l)
        return s


TerminalStamp = np.ndarray


def _series_admittance(r, x):
    if r * r + x * x <= 0.0:
        raise ValueError("branch series impedance must be nonzero")
    return 1.0 / complex(r, x)


def line_stamp(r: float, x: float, b_charging: float = 0.0) -> TerminalStamp:
    """Pi-model line block; charging split equally between both ends."""
    y = _series_admittance(r, x)
    diag = y + 0.5j * b_charging
    return np.array([[diag, -y], [-y, diag]], dtype=complex)


def transformer_stamp(r: float, x: float, tap: float) -> TerminalStamp:
    """Ideal-ratio transformer block; side 1 (``from_bus``) carries the tap."""
    if not tap > 0.0:
        raise ValueError(f"transformer tap must be positive, got {tap}")
    y = _series_admittance(r, x)
    return np.array([[y / tap**2, -y / tap], [-y / tap, y]], dtype=complex)


@dataclass(frozen=True)
class YBus:
    matrix: sp.csr_matrix
    bus_ids: tuple
    index: dict = field(compare=False)

    @property
    def n(self) -> int:
        return len(self.bus_ids)

    def dot(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def assemble_ybus(case: NetworkCase) -> YBus:
    index = case.index_of()
    n = len(index)
    parts = defaultdict(list)
    for br in case.branches:
        try:
            ends = (index[br.from_bus], index[br.to_bus])
        except KeyError as exc:
            raise CaseValidationError([f"branch {br.from_bus}-{br.to_bus} references unknown bus {exc.args[0]}"]) from None
        block = br.stamp()
        for a in range(2):
            for b in range(2):
                parts[ends[a], ends[b]].append(block[a, b])
    for i, bus in enumerate(case.buses):
        parts[i, i].append(complex(bus.shunt_g, bus.shunt_b))

    # exactly rounded sums make the result independent of input order
    keys = sorted(parts)
    rows = np.fromiter((k[0] for k in keys), dtype=np.int64, count=len(keys))
    cols = np.fromiter((k[1] for k in keys), dtype=np.int64, count=len(keys))
    data = np.array(
        [complex(math.fsum(v.real for v in parts[k]), math.fsum(v.imag for v in parts[k])) for k in keys],
        dtype=complex,
    )
    matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return YBus(matrix=matrix, bus_ids=case.bus_ids, index=index)


def real_block_expand(y) -> sp.csr_matrix:
    """Map each complex entry G+jB to the real block [[G, -B], [B, G]]."""
    m = y.matrix if isinstance(y, YBus) else y
    m = sp.coo_matrix(m)
    g, b = m.data.real, m.data.imag
    r2, c2 = 2 * m.row, 2 * m.col
    rows = np.concatenate([r2, r2, r2 + 1, r2 + 1])
    cols = np.concatenate([c2, c2 + 1, c2, c2 + 1])
    data = np.concatenate([g, -b, b, g])
    n = m.shape[0]
    return sp.csr_matrix((data, (rows, cols)), shape=(2 * n, 2 * m.shape[1]))


def interleave(v: np.ndarray) -> np.ndarray:
    """Complex vector -> real vector [x0, y0, x1, y1, ...]."""
    v = np.asarray(v, dtype=complex)
    out = np.empty(2 * v.size)
    out[0::2] = v.real
    out[1::2] = v.imag
    return out


def deinterleave(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return w[0::2] + 1j * w[1::2]


def validate_case(case: NetworkCase) -> list:
    """Return human-readable violations; an empty list means the case is usable."""
    out = []
    ids = [b.id for b in case.buses]
    dupes = sorted(i for i, count in Counter(ids).items() if count > 1)
    if dupes:
        out.append(f"duplicate bus ids {dupes}")
    known = set(ids)

    slacks = [b.id for b in case.buses if b.kind is BusKind.SLACK]
    if not slacks:
        out.append("no slack bus")
    elif len(slacks) > 1:
        out.append(f"multiple slack buses {slacks}")

    regulated = {g.bus for g in case.generators}
    for b in case.buses:
        if b.kind is not BusKind.PQ:
            if not b.v_target > 0:
                out.append(f"bus {b.id}: v_target must be positive for {b.kind.value} buses")
            if b.id not in regulated:
                out.append(f"bus {b.id}: {b.kind.value} bus has no generator attached")
        if not all(map(math.isfinite, (b.v_target, b.angle_init, b.shunt_b, b.shunt_g))):
            out.append(f"bus {b.id}: non-finite value")

    for k, br in enumerate(case.branches):
        tag = f"branch {k} ({br.from_bus}-{br.to_bus})"
        for end in (br.from_bus, br.to_bus):
            if end not in known:
                out.append(f"{tag}: unknown bus {end}")
        if br.from_bus == br.to_bus:
            out.append(f"{tag}: both ends on the same bus")
        if not br.r * br.r + br.x * br.x > 0:
            out.append(f"{tag}: zero series impedance")
        if not br.tap > 0:
            out.append(f"{tag}: tap must be positive")
        if br.kind is BranchKind.LINE and br.tap != 1.0:
            out.append(f"{tag}: line with off-nominal tap {br.tap}")
        if br.kind is BranchKind.TRANSFORMER and br.b_charging != 0.0:
            out.append(f"{tag}: transformer with line charging")

    for g in case.generators:
        if g.bus not in known:
            out.append(f"generator at unknown bus {g.bus}")
        if not g.q_min <= g.q_max:
            out.append(f"generator at bus {g.bus}: q_min > q_max")
    for ld in case.loads:
        if ld.bus not in known:
            out.append(f"load at unknown bus {ld.bus}")

    if case.buses and not dupes:
        index = case.index_of()
        edges = [(index[br.from_bus], index[br.to_bus]) for br in case.branches
                 if br.from_bus in index and br.to_bus in index]
        n = len(index)
        if edges:
            r, c = zip(*edges)
            adj = sp.coo_matrix((np.ones(len(edges)), (r, c)), shape=(n, n))
        else:
            adj = sp.coo_matrix((n, n))
        n_comp, labels = connected_components(adj, directed=False)
        if n_comp > 1:
            main = labels[case.slack_index()] if len(slacks) == 1 else np.bincount(labels).argmax()
            isolated = [case.buses[i].id for i in np.flatnonzero(labels != main)]
            out.append(f"network is not connected ({n_comp} islands); buses cut off: {isolated}")
    return out


def check_case(case: NetworkCase) -> NetworkCase:
    """Raise :class:`CaseValidationError` unless ``case`` passes validation."""
    violations = validate_case(case)
    if violations:
        raise CaseValidationError(violations)
    return case
