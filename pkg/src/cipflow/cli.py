"""Command-line front end.

    cipflow solve   --case ieee14.cdf --method ci-newton
    cipflow compare --case ieee118.cdf --out results/
    cipflow bench   --case ieee118.cdf --repeats 20

Exit codes: 0 success, 1 usage, 2 case parse/validation, 3 divergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import statistics
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .caseio import read_case, write_solution
from .exceptions import CaseParseError, CaseValidationError
from .model import assemble_ybus, check_case
from .pmu import PmuScenario, ScenarioMode, default_scenarios, simulate_pmu, table_iv_experiment
from .solvers import Method, SolverOptions, pv_angles, solve, solve_conventional_nr

log = logging.getLogger("cipflow")

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    case_path: Path
    method: Method = Method.CI_NEWTON
    tolerance: float = 1e-8
    max_iterations: int = 50
    q_limits: bool = False
    pmu_scenario: ScenarioMode | None = None
    tve: float = 0.01
    tve_mode: str = "absolute"
    seed: int = 0
    pmu_angles: Path | None = None
    output_format: str = "json"
    out: Path | None = None

    def options(self, method=None) -> SolverOptions:
        return SolverOptions(tolerance=self.tolerance, max_iterations=self.max_iterations,
                             enforce_q_limits=self.q_limits, method=method or self.method)

    def scenario(self) -> PmuScenario:
        return PmuScenario(self.pmu_scenario or ScenarioMode.EXACT, self.tve, self.seed, self.tve_mode)


def _common(p):
    p.add_argument("--case", required=True, type=Path, help="case file (.cdf/.txt = IEEE CDF, else JSON)")
    p.add_argument("--method", default="ci-newton", choices=[m.value for m in Method])
    p.add_argument("--tol", type=float, default=1e-8, help="max-norm mismatch tolerance (p.u.)")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--q-limits", action="store_true", help="switch PV buses to PQ at reactive limits")
    p.add_argument("--pmu-scenario", choices=[m.value for m in ScenarioMode])
    p.add_argument("--tve", type=float, default=0.01, help="total vector error fraction")
    p.add_argument("--tve-mode", choices=["absolute", "relative"], default="absolute")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pmu-angles", type=Path, help="CSV of (bus, radians) PV-bus angle measurements")
    p.add_argument("--out", type=Path)
    p.add_argument("--format", choices=["json", "csv"], default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cipflow", description="Current-injection power flow with PMU-fixed PV buses.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("solve", help="solve one case"))
    cmp_ = sub.add_parser("compare", help="PMU accuracy table against the Newton-Raphson reference")
    _common(cmp_)
    cmp_.add_argument("--n-seeds", type=int, default=100, help="random-scenario draws")
    bench = sub.add_parser("bench", help="time all methods")
    _common(bench)
    bench.add_argument("--repeats", type=int, default=20)
    bench.add_argument("--warmup", type=int, default=3)
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig(
        case_path=args.case, method=Method(args.method), tolerance=args.tol, max_iterations=args.max_iter,
        q_limits=args.q_limits,
        pmu_scenario=ScenarioMode(args.pmu_scenario) if args.pmu_scenario else None,
        tve=args.tve, tve_mode=args.tve_mode, seed=args.seed, pmu_angles=args.pmu_angles,
        output_format=args.format, out=args.out,
    )
    try:
        cfg.options()
        cfg.scenario()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.command == "solve" and cfg.method is not Method.CI_PMU and (cfg.pmu_scenario or cfg.pmu_angles):
        raise UsageError("--pmu-scenario/--pmu-angles only apply to --method ci-pmu")
    return cfg


def read_pmu_angles(path) -> dict:
    """Two-column CSV (bus id, angle in radians); a non-numeric first row is a header."""
    angles = {}
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row or row[0].startswith("#"):
                continue
            try:
                angles[int(row[0])] = float(row[1])
            except (ValueError, IndexError):
                if k == 0:
                    continue
                raise UsageError(f"{path}: bad PMU angle row {k + 1}: {row}") from None
    return angles


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _pmu_for(cfg: RunConfig, case, ybus) -> dict:
    if cfg.pmu_angles is not None:
        try:
            return read_pmu_angles(cfg.pmu_angles)
        except OSError as exc:
            raise UsageError(f"cannot read {cfg.pmu_angles}: {exc.strerror}") from None
    ref = solve_conventional_nr(case, cfg.options(), ybus=ybus)
    if not ref.converged:
        raise RuntimeError(f"reference solve diverged: {ref.message}")
    return simulate_pmu(pv_angles(ref, case), cfg.scenario())


def cmd_solve(cfg: RunConfig) -> int:
    case = check_case(read_case(cfg.case_path))
    ybus = assemble_ybus(case)
    pmu = None
    if cfg.method is Method.CI_PMU:
        if cfg.pmu_angles is None and cfg.pmu_scenario is None:
            raise UsageError("--method ci-pmu needs --pmu-angles or --pmu-scenario")
        try:
            pmu = _pmu_for(cfg, case, ybus)
        except RuntimeError as exc:
            log.error("%s", exc)
            return EXIT_DIVERGED
    try:
        report = solve(case, cfg.options(), pmu=pmu, ybus=ybus)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _emit(write_solution(report, cfg.output_format), cfg.out)
    if not report.converged:
        log.error("%s did not converge: %s", report.method, report.message)
        return EXIT_DIVERGED
    return EXIT_OK


def emit_plot_data(metrics, prefix) -> tuple:
    """Write ``<prefix>_vm.csv`` and ``<prefix>_va.csv`` rows of (bus, abs_error)."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    order = sorted(range(len(metrics.bus_ids)), key=lambda k: metrics.bus_ids[k])
    paths = []
    for suffix, values in (("vm", metrics.abs_vm), ("va", metrics.abs_va)):
        path = prefix.with_name(f"{prefix.name}_{suffix}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bus", "abs_error"])
            for k in order:
                w.writerow([int(metrics.bus_ids[k]), repr(float(values[k]))])
        paths.append(path)
    return tuple(paths)


def cmd_compare(cfg: RunConfig, n_seeds: int = 100) -> int:
    case = check_case(read_case(cfg.case_path))
    if cfg.pmu_scenario is None:
        scenarios = default_scenarios(n_seeds, cfg.seed, cfg.tve, cfg.tve_mode)
    else:
        scenarios = [cfg.scenario()]
    system = case.name or cfg.case_path.stem
    table = table_iv_experiment(case, scenarios, cfg.options(Method.CI_PMU), system=system)
    text = table.to_csv() if cfg.output_format == "csv" else table.to_json()
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        cfg.out.mkdir(parents=True, exist_ok=True)
        (cfg.out / f"accuracy.{cfg.output_format}").write_text(text)
        for row in table.rows:
            if row.scenario in ("worst", "random") and row.metrics is not None:
                emit_plot_data(row.metrics, cfg.out / f"errors_{row.scenario}")
    if table.reference is None or not table.reference.converged:
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_bench(cfg: RunConfig, repeats: int = 20, warmup: int = 3) -> int:
    case = check_case(read_case(cfg.case_path))
    ybus = assemble_ybus(case)
    try:
        pmu = _pmu_for(cfg, case, ybus)
    except RuntimeError as exc:
        log.error("%s", exc)
        return EXIT_DIVERGED
    rows = []
    for method in Method:
        opts = cfg.options(method)
        times, report = [], None
        for k in range(warmup + repeats):
            t0 = time.perf_counter()
            report = solve(case, opts, pmu=pmu if method is Method.CI_PMU else None, ybus=ybus)
            if k >= warmup:
                times.append(time.perf_counter() - t0)
        rows.append({
            "method": method.value, "converged": report.converged, "iterations": report.iterations,
            "factorizations": report.factorizations, "median_time_s": statistics.median(times),
            "message": report.message,
        })
    by = {r["method"]: r for r in rows}
    ratios = {
        "ci-pmu/conventional": by["ci-pmu"]["median_time_s"] / by["conventional"]["median_time_s"],
        "ci-pmu/ci-newton": by["ci-pmu"]["median_time_s"] / by["ci-newton"]["median_time_s"],
    }
    if cfg.output_format == "json":
        text = json.dumps({"case": case.name, "repeats": repeats, "warmup": warmup,
                           "methods": rows, "time_ratios": ratios}, indent=1) + "\n"
    else:
        buf = io.StringIO()
        buf.write(f"# case={case.name}\n# repeats={repeats}\n# warmup={warmup}\n")
        for key, val in ratios.items():
            buf.write(f"# ratio {key}={val:.4f}\n")
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    _emit(text, cfg.out)
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_DIVERGED


def main(argv=None) -> int:
    logging.basicConfig(format="%(name)s: %(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            log.setLevel(logging.DEBUG)
        cfg = _config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, args.n_seeds)
        return cmd_bench(cfg, args.repeats, args.warmup)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        log.error("%s", exc)
        return EXIT_USAGE
    except (CaseParseError, CaseValidationError) as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
