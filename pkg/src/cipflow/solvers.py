"""Power-flow solvers.

Four methods share the network bookkeeping in :class:`_Net`:

``conventional``
    Polar Newton-Raphson on power mismatches; the reference every other
    method is checked against.
``ci-newton``
    Rectangular current-injection Newton.  Load/generator current
    derivatives enter the Jacobian, PV buses trade their V_x unknown for the
    reactive injection Q_s.
``ci-linear``
    Same system, but PQ-bus injection currents are only evaluated on the
    right-hand side; the PQ part of the matrix is the constant admittance
    block.
``ci-pmu``
    PV-bus voltages are fixed from measured angles, leaving the constant PQ x
    PQ admittance block, which is factorized exactly once.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import linsolve
from .caseio import BusResult, GenResult, SolutionReport
from .exceptions import (
    DegenerateVoltageError,
    MissingPmuAngleError,
    PvAngleOverflowError,
    SingularMatrixError,
)
from .injections import injection_current, injection_jacobian, pv_injection_current, pv_update_terms, pv_vx
from .model import BusKind, NetworkCase, YBus, assemble_ybus, check_case, interleave, real_block_expand

_FAILURES = (DegenerateVoltageError, PvAngleOverflowError, SingularMatrixError)


class Method(str, enum.Enum):
    CONVENTIONAL = "conventional"
    CI_NEWTON = "ci-newton"
    CI_LINEAR = "ci-linear"
    CI_PMU = "ci-pmu"


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int = 50
    flat_start: bool = True
    enforce_q_limits: bool = False
    method: Method = Method.CI_NEWTON

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class SolverState:
    """Iterate of a current-injection solve.

    ``q_s_pv`` holds the net reactive injection of each PV bus (in PV-bus
    order) for methods that carry it as an unknown, else ``None``.
    """

    voltages: np.ndarray
    q_s_pv: np.ndarray | None = None
    iteration: int = 0
    trace: list = field(default_factory=list)
    factorizations_used: int = 0


@dataclass(frozen=True)
class QLimitEvent:
    bus: int
    limit: str
    q_solved: float
    q_clamped: float
    outer_pass: int

    def as_dict(self):
        return {"bus": self.bus, "limit": self.limit, "q_solved": self.q_solved,
                "q_clamped": self.q_clamped, "outer_pass": self.outer_pass}


class _Net:
    def __init__(self, case: NetworkCase, ybus: YBus | None = None):
        self.case = case
        self.ybus = ybus if ybus is not None else assemble_ybus(case)
        self.Y = self.ybus.matrix.tocsr()
        self.Yr = real_block_expand(self.Y).tocsr()
        kinds = case.kinds()
        self.n = case.n_bus
        self.slack = case.slack_index()
        self.pv = np.flatnonzero(kinds == BusKind.PV.value)
        self.pq = np.flatnonzero(kinds == BusKind.PQ.value)
        self.free = np.sort(np.concatenate([self.pv, self.pq]))
        self.rows = _pairs(self.free)
        self.s = case.scheduled_power()
        self.vt = np.array([b.v_target for b in case.buses], dtype=float)
        self.theta0 = case.buses[self.slack].angle_init
        self.ids = case.bus_ids

    def initial_voltage(self, flat: bool) -> np.ndarray:
        if flat:
            mag = np.where(np.arange(self.n) == self.slack, self.vt, 1.0)
            mag[self.pv] = self.vt[self.pv]
            ang = np.full(self.n, self.theta0)
        else:
            mag = self.vt.copy()
            ang = np.array([b.angle_init for b in self.case.buses])
        return mag * np.exp(1j * ang)


def _pairs(idx):
    idx = np.asarray(idx, dtype=int)
    return np.column_stack([2 * idx, 2 * idx + 1]).ravel()


def _block_diag(index, blocks, n2):
    """Sparse 2n x 2n matrix with 2x2 ``blocks`` on the diagonal at bus ``index``."""
    r = np.repeat(2 * index, 4) + np.tile([0, 0, 1, 1], len(index))
    c = np.repeat(2 * index, 4) + np.tile([0, 1, 0, 1], len(index))
    return sp.csr_matrix((np.asarray(blocks).reshape(-1), (r, c)), shape=(n2, n2))


def mismatch(case: NetworkCase, ybus: YBus, state: SolverState, net: _Net | None = None) -> np.ndarray:
    """Complex current residual I(V) - Y V per bus.

    PV buses use the state's Q_s iterate when it has one, otherwise the
    reactive injection implied by the network so only the active-power part
    of the residual remains.
    """
    net = net or _Net(case, ybus)
    v = state.voltages
    yv = net.Y @ v
    s = net.s.copy()
    inj = np.empty(net.n, dtype=complex)
    if state.q_s_pv is None:
        s[net.pv] = s[net.pv].real + 1j * (v[net.pv] * np.conj(yv[net.pv])).imag
        other = np.arange(net.n)
    else:
        pv = pv_injection_current((s[net.pv].real, state.q_s_pv), net.vt[net.pv], v[net.pv].imag)
        inj[net.pv] = pv.ix + 1j * pv.iy
        other = np.setdiff1d(np.arange(net.n), net.pv)
    cur = injection_current((s[other].real, s[other].imag), (v[other].real, v[other].imag))
    inj[other] = cur.ix + 1j * cur.iy
    return inj - yv


def _max_norm(x):
    return float(np.max(np.abs(x))) if x.size else 0.0


def recover_outputs(case: NetworkCase, ybus: YBus, voltages: np.ndarray) -> list:
    """Generator outputs implied by a solved voltage profile.

    Slack generators take the network's P and Q, PV generators its Q with P
    as scheduled; several units at one bus share Q in proportion to their
    reactive range (equally when ranges are unbounded).
    """
    index = case.index_of()
    s_bus = voltages * np.conj(ybus.matrix @ voltages) + case.load_power()
    by_bus = {}
    for k, g in enumerate(case.generators):
        by_bus.setdefault(g.bus, []).append(k)
    out = [None] * len(case.generators)
    for bus_id, members in by_bus.items():
        bus = case.buses[index[bus_id]]
        gens = [case.generators[k] for k in members]
        total = s_bus[index[bus_id]]
        if bus.kind is BusKind.PQ:
            p = [g.p_g for g in gens]
            q = [g.q_g for g in gens]
        else:
            if bus.kind is BusKind.SLACK:
                extra = (total.real - sum(g.p_g for g in gens)) / len(gens)
                p = [g.p_g + extra for g in gens]
            else:
                p = [g.p_g for g in gens]
            ranges = [g.q_max - g.q_min for g in gens]
            if len(gens) == 1 or not all(map(math.isfinite, ranges)) or sum(ranges) <= 0:
                share = [1.0 / len(gens)] * len(gens)
            else:
                share = [r / sum(ranges) for r in ranges]
            q = [total.imag * w for w in share]
        for k, pk, qk in zip(members, p, q):
            out[k] = GenResult(bus_id, float(pk), float(qk))
    return out


def _report(net, v, method, converged, iterations, factorizations, trace, t0, message=""):
    s = v * np.conj(net.Y @ v)
    buses = [
        BusResult(int(i), float(abs(x)), float(np.angle(x)), float(si.real), float(si.imag))
        for i, x, si in zip(net.ids, v, s)
    ]
    return SolutionReport(
        method=method.value,
        converged=bool(converged),
        buses=buses,
        generators=recover_outputs(net.case, net.ybus, v),
        iterations=int(iterations),
        factorizations=int(factorizations),
        max_mismatch=float(trace[-1]) if trace else math.nan,
        wall_time=time.perf_counter() - t0,
        trace=[float(t) for t in trace],
        case_name=net.case.name,
        message=message,
    )


def _not_converged(opts):
    return f"no convergence within {opts.max_iterations} iterations"


def _conventional(net: _Net, opts: SolverOptions, t0: float) -> SolutionReport:
    v = net.initial_voltage(opts.flat_start)
    vm, va = np.abs(v), np.angle(v)
    pvpq = net.free
    pq = net.pq
    npvpq = len(pvpq)
    trace, facs, it = [], 0, 0
    message = _not_converged(opts)
    converged = False
    try:
        for it in range(opts.max_iterations + 1):
            ibus = net.Y @ v
            mis = v * np.conj(ibus) - net.s
            f = np.concatenate([mis[pvpq].real, mis[pq].imag])
            trace.append(_max_norm(f))
            if trace[-1] < opts.tolerance:
                converged, message = True, ""
                break
            if it == opts.max_iterations:
                break
            dva, dvm = _ds_dv(net.Y, v, ibus)
            j = sp.vstack([
                sp.hstack([dva[pvpq][:, pvpq].real, dvm[pvpq][:, pq].real]),
                sp.hstack([dva[pq][:, pvpq].imag, dvm[pq][:, pq].imag]),
            ]).tocsc()
            dx = linsolve.factorize(j).solve(-f)
            facs += 1
            va[pvpq] += dx[:npvpq]
            vm[pq] += dx[npvpq:]
            v = vm * np.exp(1j * va)
    except _FAILURES as exc:
        message = f"{type(exc).__name__}: {exc}"
    return _report(net, v, Method.CONVENTIONAL, converged, it, facs, trace, t0, message)


def _ds_dv(y, v, ibus):
    """Sparse partials of bus complex power w.r.t. voltage angle and magnitude."""
    dv = sp.diags(v)
    di = sp.diags(ibus)
    dvn = sp.diags(v / np.abs(v))
    d_va = 1j * dv @ (di - y @ dv).conj()
    d_vm = dv @ (y @ dvn).conj() + di.conj() @ dvn
    return sp.csr_matrix(d_va), sp.csr_matrix(d_vm)


def _ci_matrix(net: _Net, v: np.ndarray, q: np.ndarray, newton: bool) -> sp.csr_matrix:
    """Reduced update matrix of the current-injection Newton step.

    Unknown pair per bus is (dVx, dVy) at PQ buses and (dQs, dVy) at PV buses,
    where Vx follows Vy along the target-magnitude circle.
    """
    n2 = 2 * net.n
    pv = net.pv
    vy = v[pv].imag
    dvx = -vy / pv_vx(net.vt[pv], vy)
    diag = np.ones(n2)
    diag[2 * pv] = 0.0
    t = sp.diags(diag, format="csr") + sp.csr_matrix((dvx, (2 * pv, 2 * pv + 1)), shape=(n2, n2))
    terms = pv_update_terms((net.s[pv].real, q), net.vt[pv], vy)
    pv_blocks = np.stack([terms.a, terms.b, terms.c, terms.d], axis=-1).reshape(-1, 2, 2)
    d = _block_diag(pv, pv_blocks, n2)
    if newton and len(net.pq):
        s = net.s[net.pq]
        d = d + _block_diag(net.pq, injection_jacobian((s.real, s.imag), (v[net.pq].real, v[net.pq].imag)), n2)
    j = net.Yr @ t - d
    return j[net.rows][:, net.rows].tocsc()


def _ci(net: _Net, opts: SolverOptions, t0: float, newton: bool) -> SolutionReport:
    method = Method.CI_NEWTON if newton else Method.CI_LINEAR
    v = net.initial_voltage(opts.flat_start)
    state = SolverState(voltages=v, q_s_pv=np.zeros(len(net.pv)))
    message = _not_converged(opts)
    converged = False
    fac, prev = None, None
    pv, pq = net.pv, net.pq
    try:
        for it in range(opts.max_iterations + 1):
            state.iteration = it
            f = interleave(mismatch(net.case, net.ybus, state, net))[net.rows]
            state.trace.append(_max_norm(f))
            if state.trace[-1] < opts.tolerance:
                converged, message = True, ""
                break
            if it == opts.max_iterations:
                break
            j = _ci_matrix(net, state.voltages, state.q_s_pv, newton)
            if fac is None or newton or (j != prev).nnz:
                fac = linsolve.factorize(j)
                state.factorizations_used += 1
                prev = j
            step = np.zeros(2 * net.n)
            step[net.rows] = fac.solve(f)
            v = state.voltages.copy()
            v[pq] += step[2 * pq] + 1j * step[2 * pq + 1]
            vy = v[pv].imag + step[2 * pv + 1]
            v[pv] = pv_vx(net.vt[pv], vy) + 1j * vy
            state.q_s_pv = state.q_s_pv + step[2 * pv]
            state.voltages = v
    except _FAILURES as exc:
        message = f"{type(exc).__name__}: {exc}"
    return _report(net, state.voltages, method, converged, state.iteration, state.factorizations_used,
                   state.trace, t0, message)


def _pmu(net: _Net, pmu: dict, opts: SolverOptions, t0: float) -> SolutionReport:
    missing = [net.ids[k] for k in net.pv if net.ids[k] not in pmu]
    if missing:
        raise MissingPmuAngleError(missing)
    v = net.initial_voltage(opts.flat_start)
    ang = np.array([pmu[net.ids[k]] for k in net.pv], dtype=float)
    v[net.pv] = net.vt[net.pv] * np.exp(1j * ang)
    pq = net.pq
    rows = _pairs(pq)
    state = SolverState(voltages=v)
    message = _not_converged(opts)
    converged = False
    try:
        fac = None
        for it in range(opts.max_iterations + 1):
            state.iteration = it
            vq = state.voltages[pq]
            cur = injection_current((net.s[pq].real, net.s[pq].imag), (vq.real, vq.imag))
            resid = (cur.ix + 1j * cur.iy) - (net.Y[pq] @ state.voltages)
            f = interleave(resid)
            state.trace.append(_max_norm(f))
            if state.trace[-1] < opts.tolerance:
                converged, message = True, ""
                break
            if it == opts.max_iterations:
                break
            if fac is None:
                fac = linsolve.factorize(net.Yr[rows][:, rows].tocsc())
                state.factorizations_used += 1
            step = fac.solve(f)
            v = state.voltages.copy()
            v[pq] += step[0::2] + 1j * step[1::2]
            state.voltages = v
    except _FAILURES as exc:
        message = f"{type(exc).__name__}: {exc}"
    return _report(net, state.voltages, Method.CI_PMU, converged, state.iteration, state.factorizations_used,
                   state.trace, t0, message)


def enforce_q_limits(report: SolutionReport, case: NetworkCase, outer_pass: int = 0) -> list:
    """PV buses whose solved reactive output lies outside the generators' limits."""
    gens = {}
    for g in case.generators:
        gens.setdefault(g.bus, []).append(g)
    q_solved = {}
    for g in report.generators:
        q_solved[g.bus] = q_solved.get(g.bus, 0.0) + g.q_g
    events = []
    for bus in case.buses:
        if bus.kind is not BusKind.PV:
            continue
        lo = sum(g.q_min for g in gens[bus.id])
        hi = sum(g.q_max for g in gens[bus.id])
        q = q_solved[bus.id]
        if q > hi:
            events.append(QLimitEvent(bus.id, "q_max", q, hi, outer_pass))
        elif q < lo:
            events.append(QLimitEvent(bus.id, "q_min", q, lo, outer_pass))
    return events


def switch_to_pq(case: NetworkCase, events) -> NetworkCase:
    """Turn each violating PV bus into a PQ bus with its units at the violated limit."""
    hit = {e.bus: e.limit for e in events}
    buses = [replace(b, kind=BusKind.PQ) if b.id in hit else b for b in case.buses]
    generators = [
        replace(g, q_g=getattr(g, hit[g.bus])) if g.bus in hit else g
        for g in case.generators
    ]
    return replace(case, buses=buses, generators=generators)


def solve(case: NetworkCase, options: SolverOptions | None = None, pmu: dict | None = None,
          ybus: YBus | None = None) -> SolutionReport:
    """Solve ``case`` with ``options.method``; never raises on divergence.

    Divergence, singular matrices and collapsing voltages come back as a
    report with ``converged=False`` and a ``message``.  With
    ``enforce_q_limits`` the solve is repeated, switching violating PV buses
    to PQ after each converged pass.
    """
    opts = options or SolverOptions()
    check_case(case)
    if opts.method is Method.CI_PMU:
        if pmu is None:
            raise MissingPmuAngleError([b.id for b in case.buses if b.kind is BusKind.PV])
    t0 = time.perf_counter()
    events = []
    work = case
    n_pv = sum(b.kind is BusKind.PV for b in case.buses)
    for outer in range(n_pv + 1):
        net = _Net(work, ybus)
        if opts.method is Method.CONVENTIONAL:
            report = _conventional(net, opts, t0)
        elif opts.method is Method.CI_PMU:
            report = _pmu(net, pmu, opts, t0)
        else:
            report = _ci(net, opts, t0, newton=opts.method is Method.CI_NEWTON)
        if not (report.converged and opts.enforce_q_limits):
            break
        new = enforce_q_limits(report, work, outer)
        if not new:
            break
        events.extend(new)
        work = switch_to_pq(work, new)
    else:
        report.converged = False
        report.message = "reactive-limit switching did not settle"
    report.events = [e.as_dict() for e in events]
    report.wall_time = time.perf_counter() - t0
    return report


def solve_conventional_nr(case, options=None, ybus=None) -> SolutionReport:
    return solve(case, replace(options or SolverOptions(), method=Method.CONVENTIONAL), ybus=ybus)


def solve_ci_newton(case, options=None, ybus=None) -> SolutionReport:
    return solve(case, replace(options or SolverOptions(), method=Method.CI_NEWTON), ybus=ybus)


def solve_ci_linear(case, options=None, ybus=None) -> SolutionReport:
    return solve(case, replace(options or SolverOptions(), method=Method.CI_LINEAR), ybus=ybus)


def solve_ci_pmu(case, pmu: dict, options=None, ybus=None) -> SolutionReport:
    return solve(case, replace(options or SolverOptions(), method=Method.CI_PMU), pmu=pmu, ybus=ybus)


def pv_angles(report: SolutionReport, case: NetworkCase) -> dict:
    """Solved angles of the case's PV buses, keyed by bus id."""
    return report.angles(b.id for b in case.buses if b.kind is BusKind.PV)
