"""Synthetic PMU angle measurements and accuracy metrics.

Measured PV-bus angles are produced by perturbing a reference solution's
angles with a total-vector-error budget.  For a pure phase error ``e`` the TVE
is ``2*sin(e/2) ~= e``, so a TVE fraction of 0.01 becomes an angle error of
0.01 rad (``angle_error="absolute"``).  ``angle_error="relative"`` instead
scales each angle by ``1 + e``.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .caseio import SolutionReport
from .model import NetworkCase, assemble_ybus
from .solvers import SolverOptions, pv_angles, solve_ci_pmu, solve_conventional_nr


class ScenarioMode(str, enum.Enum):
    EXACT = "exact"
    WORST_POSITIVE = "worst+"
    WORST_NEGATIVE = "worst-"
    RANDOM = "random"


@dataclass(frozen=True)
class PmuScenario:
    mode: ScenarioMode = ScenarioMode.EXACT
    tve_fraction: float = 0.01
    seed: int | None = None
    angle_error: str = "absolute"

    def __post_init__(self):
        object.__setattr__(self, "mode", ScenarioMode(self.mode))
        if not self.tve_fraction >= 0:
            raise ValueError("tve_fraction must be non-negative")
        if self.angle_error not in ("absolute", "relative"):
            raise ValueError(f"angle_error must be 'absolute' or 'relative', got {self.angle_error!r}")

    @property
    def label(self) -> str:
        if self.mode is ScenarioMode.RANDOM:
            return f"random[seed={self.seed}]"
        return self.mode.value


def simulate_pmu(true_angles: dict, scenario: PmuScenario) -> dict:
    """Perturbed copy of ``true_angles`` (bus id -> rad) per ``scenario``."""
    ids = sorted(true_angles)
    theta = np.array([true_angles[i] for i in ids], dtype=float)
    tve = scenario.tve_fraction
    if scenario.mode is ScenarioMode.EXACT:
        err = np.zeros_like(theta)
    elif scenario.mode is ScenarioMode.WORST_POSITIVE:
        err = np.full_like(theta, tve)
    elif scenario.mode is ScenarioMode.WORST_NEGATIVE:
        err = np.full_like(theta, -tve)
    else:
        err = np.random.default_rng(scenario.seed).uniform(-tve, tve, size=theta.size)
    measured = theta * (1.0 + err) if scenario.angle_error == "relative" else theta + err
    return {i: float(a) for i, a in zip(ids, measured)}


@dataclass(frozen=True)
class ErrorMetrics:
    bus_ids: np.ndarray
    abs_vm: np.ndarray
    abs_va: np.ndarray

    @property
    def max_abs_vm(self) -> float:
        return float(self.abs_vm.max())

    @property
    def max_abs_va(self) -> float:
        return float(self.abs_va.max())

    @property
    def mean_abs_vm(self) -> float:
        return float(self.abs_vm.mean())

    @property
    def mean_abs_va(self) -> float:
        return float(self.abs_va.mean())


def error_metrics(reference: SolutionReport, candidate: SolutionReport) -> ErrorMetrics:
    """Per-bus absolute voltage magnitude/angle errors, ordered by bus id."""
    ref = {b.id: b for b in reference.buses}
    cand = {b.id: b for b in candidate.buses}
    if ref.keys() != cand.keys():
        raise ValueError(f"bus sets differ: {sorted(ref.keys() ^ cand.keys())}")
    ids = np.array(sorted(ref))
    vm = np.array([abs(cand[i].vm - ref[i].vm) for i in ids])
    va = np.array([abs(cand[i].va - ref[i].va) for i in ids])
    return ErrorMetrics(ids, vm, va)


def worst_of(*metrics: ErrorMetrics) -> ErrorMetrics:
    """Bus-wise maximum over several scenarios."""
    return ErrorMetrics(metrics[0].bus_ids,
                        np.max([m.abs_vm for m in metrics], axis=0),
                        np.max([m.abs_va for m in metrics], axis=0))


@dataclass
class TableRow:
    system: str
    scenario: str
    converged: bool
    max_abs_vm: float = math.nan
    max_abs_va: float = math.nan
    mean_abs_vm: float = math.nan
    mean_abs_va: float = math.nan
    metrics: ErrorMetrics | None = field(default=None, repr=False)
    message: str = ""

    @classmethod
    def from_metrics(cls, system, scenario, m: ErrorMetrics):
        return cls(system, scenario, True, m.max_abs_vm, m.max_abs_va, m.mean_abs_vm, m.mean_abs_va, m)


@dataclass
class AccuracyTable:
    rows: list
    reference: SolutionReport | None = None

    def row(self, scenario: str) -> TableRow:
        for r in self.rows:
            if r.scenario == scenario:
                return r
        raise KeyError(scenario)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["system", "scenario", "max_abs_vm_pu", "max_abs_va_rad",
                    "mean_abs_vm_pu", "mean_abs_va_rad", "converged", "message"])
        for r in self.rows:
            w.writerow([r.system, r.scenario, repr(r.max_abs_vm), repr(r.max_abs_va),
                        repr(r.mean_abs_vm), repr(r.mean_abs_va), r.converged, r.message])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = []
        for r in self.rows:
            d = {k: getattr(r, k) for k in ("system", "scenario", "converged", "max_abs_vm", "max_abs_va",
                                             "mean_abs_vm", "mean_abs_va", "message")}
            if r.metrics is not None:
                d["bus_ids"] = r.metrics.bus_ids.tolist()
                d["abs_vm"] = r.metrics.abs_vm.tolist()
                d["abs_va"] = r.metrics.abs_va.tolist()
            rows.append(d)
        return json.dumps({"rows": rows}, indent=1, sort_keys=True) + "\n"


def default_scenarios(n_seeds: int = 100, first_seed: int = 0, tve: float = 0.01,
                      angle_error: str = "absolute") -> list:
    fixed = [PmuScenario(m, tve, angle_error=angle_error)
             for m in (ScenarioMode.EXACT, ScenarioMode.WORST_POSITIVE, ScenarioMode.WORST_NEGATIVE)]
    return fixed + [PmuScenario(ScenarioMode.RANDOM, tve, first_seed + k, angle_error)
                    for k in range(n_seeds)]


def table_iv_experiment(case: NetworkCase, scenarios, options: SolverOptions | None = None,
                        system: str | None = None) -> AccuracyTable:
    """Oracle solve, then one PMU-based solve per scenario, scored against the oracle.

    Besides one row per scenario, a ``worst`` row (bus-wise max of ``worst+``
    and ``worst-``) and a ``random`` row (per-statistic mean over all random
    draws) are appended when their inputs are present.
    """
    system = system or case.name or "case"
    options = options or SolverOptions()
    ybus = assemble_ybus(case)
    reference = solve_conventional_nr(case, options, ybus=ybus)
    if not reference.converged:
        return AccuracyTable([TableRow(system, "reference", False, message=reference.message)], reference)
    truth = pv_angles(reference, case)

    rows = []
    for sc in scenarios:
        report = solve_ci_pmu(case, simulate_pmu(truth, sc), options, ybus=ybus)
        if report.converged:
            rows.append(TableRow.from_metrics(system, sc.label, error_metrics(reference, report)))
        else:
            rows.append(TableRow(system, sc.label, False, message=report.message))

    by_label = {r.scenario: r for r in rows}
    worst = [by_label.get(m.value) for m in (ScenarioMode.WORST_POSITIVE, ScenarioMode.WORST_NEGATIVE)]
    if all(r is not None and r.converged for r in worst):
        rows.append(TableRow.from_metrics(system, "worst", worst_of(*(r.metrics for r in worst))))

    rand = [r for r in rows if r.scenario.startswith("random[")]
    if rand:
        ok = [r for r in rand if r.converged]
        if ok:
            mean_m = ErrorMetrics(ok[0].metrics.bus_ids,
                                  np.mean([r.metrics.abs_vm for r in ok], axis=0),
                                  np.mean([r.metrics.abs_va for r in ok], axis=0))
            rows.append(TableRow(
                system, "random", len(ok) == len(rand),
                float(np.mean([r.max_abs_vm for r in ok])), float(np.mean([r.max_abs_va for r in ok])),
                float(np.mean([r.mean_abs_vm for r in ok])), float(np.mean([r.mean_abs_va for r in ok])),
                mean_m, "" if len(ok) == len(rand) else f"{len(rand) - len(ok)} draws failed",
            ))
        else:
            rows.append(TableRow(system, "random", False, message="all draws failed"))
    return AccuracyTable(rows, reference)
