"""scikit-learn style wrapper around :func:`cipflow.solvers.solve`.

Hyper-parameters live on the constructor so the estimator can be cloned,
grid-searched over solver settings, or stored with ``get_params``.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .model import NetworkCase, assemble_ybus, check_case
from .pmu import PmuScenario, simulate_pmu
from .solvers import Method, SolverOptions, pv_angles, solve, solve_conventional_nr


class PowerFlow(BaseEstimator):
    """Power-flow solver with an estimator interface.

    Parameters
    ----------
    method : {"conventional", "ci-newton", "ci-linear", "ci-pmu"}
    tol : float
        Max-norm mismatch tolerance in per-unit.
    max_iter : int
    flat_start : bool
    q_limits : bool
        Re-solve with violating PV buses switched to PQ.
    pmu_scenario : {"exact", "worst+", "worst-", "random"} or None
        Used by ``ci-pmu`` when ``fit`` gets no measured angles; the angles
        are then synthesized from a Newton-Raphson reference solve.
    tve, seed, tve_mode
        Passed to :class:`~cipflow.pmu.PmuScenario`.

    Attributes
    ----------
    report_ : SolutionReport
    voltage_ : ndarray of complex, per bus in case order
    n_iter_, n_factorizations_ : int
    converged_ : bool
    """

    def __init__(self, method="ci-newton", tol=1e-8, max_iter=50, flat_start=True, q_limits=False,
                 pmu_scenario=None, tve=0.01, seed=None, tve_mode="absolute"):
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self.flat_start = flat_start
        self.q_limits = q_limits
        self.pmu_scenario = pmu_scenario
        self.tve = tve
        self.seed = seed
        self.tve_mode = tve_mode

    def _options(self):
        return SolverOptions(tolerance=self.tol, max_iterations=self.max_iter, flat_start=self.flat_start,
                             enforce_q_limits=self.q_limits, method=self.method)

    def fit(self, case: NetworkCase, pmu_angles: dict | None = None):
        if not isinstance(case, NetworkCase):
            raise TypeError(f"expected a NetworkCase, got {type(case).__name__}")
        check_case(case)
        opts = self._options()
        ybus = assemble_ybus(case)
        if opts.method is Method.CI_PMU and pmu_angles is None:
            if self.pmu_scenario is None:
                raise ValueError("method='ci-pmu' needs pmu_angles or a pmu_scenario")
            ref = solve_conventional_nr(case, opts, ybus=ybus)
            if not ref.converged:
                raise RuntimeError(f"reference solve diverged: {ref.message}")
            scenario = PmuScenario(self.pmu_scenario, self.tve, self.seed, self.tve_mode)
            pmu_angles = simulate_pmu(pv_angles(ref, case), scenario)
        report = solve(case, opts, pmu=pmu_angles, ybus=ybus)
        self.report_ = report
        self.voltage_ = report.voltage
        self.bus_ids_ = report.bus_ids
        self.n_iter_ = report.iterations
        self.n_factorizations_ = report.factorizations
        self.converged_ = report.converged
        return self

    def fit_predict(self, case: NetworkCase, pmu_angles: dict | None = None):
        return self.fit(case, pmu_angles).voltage_

    def summary(self) -> dict:
        check_is_fitted(self, "report_")
        return {"method": self.report_.method, "converged": self.converged_, "iterations": self.n_iter_,
                "factorizations": self.n_factorizations_, "max_mismatch": self.report_.max_mismatch}
