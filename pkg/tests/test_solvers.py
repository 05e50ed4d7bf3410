import math
from dataclasses import replace

import numpy as np
import pytest

import oracles
from cipflow.exceptions import MissingPmuAngleError
from cipflow.model import Branch, Bus, BusKind, Generator, Load, NetworkCase, assemble_ybus
from cipflow.solvers import (
    Method,
    SolverOptions,
    SolverState,
    enforce_q_limits,
    mismatch,
    recover_outputs,
    solve,
    solve_ci_linear,
    solve_ci_newton,
    solve_ci_pmu,
    solve_conventional_nr,
)

SYSTEMS = ["ieee14", "ieee118"]
NON_PMU = [solve_conventional_nr, solve_ci_newton, solve_ci_linear]


def two_bus(p_load=0.0, q_load=0.0, r=0.0, x=0.1):
    return NetworkCase(
        [Bus(1, BusKind.SLACK, 1.0), Bus(2)],
        [Branch(1, 2, r, x)],
        [Generator(1)],
        [Load(2, p_load, q_load)] if p_load or q_load else [],
        name="two-bus",
    )


def radial3():
    return NetworkCase(
        [Bus(1, BusKind.SLACK, 1.02), Bus(2), Bus(3)],
        [Branch(1, 2, 0.01, 0.08, 0.02), Branch(2, 3, 0.02, 0.1)],
        [Generator(1)],
        [Load(2, 0.4, 0.1), Load(3, 0.3, 0.15)],
    )


def assert_same_voltages(a, b, tol=1e-6):
    assert list(a.bus_ids) == list(b.bus_ids)
    assert np.abs(np.array(a.vm) - b.vm).max() < tol
    assert np.abs(np.array(a.va) - b.va).max() < tol


class TestMismatch:
    @pytest.mark.parametrize("name", SYSTEMS)
    def test_at_oracle_solution(self, name, cases, oracle):
        case = cases[name]
        res = mismatch(case, assemble_ybus(case), SolverState(np.array(oracle[name].voltage)))
        res[case.slack_index()] = 0
        assert np.abs(res).max() < 10 * 1e-8

    def test_no_load_flat(self):
        case = NetworkCase([Bus(1, BusKind.SLACK, 1.03), Bus(2), Bus(3)],
                           [Branch(1, 2, 0.01, 0.1), Branch(2, 3, 0.0, 0.2), Branch(1, 3, 0.05, 0.3)],
                           [Generator(1)])
        v = np.full(3, 1.03 + 0j)
        assert np.abs(mismatch(case, assemble_ybus(case), SolverState(v))).max() < 1e-14

    def test_two_bus_empty(self):
        case = two_bus()
        assert np.abs(mismatch(case, assemble_ybus(case), SolverState(np.ones(2, complex)))).max() == 0


class TestConventional:
    def test_no_load(self):
        r = solve_conventional_nr(two_bus())
        assert r.converged
        assert r.vm[1] == pytest.approx(1.0, abs=1e-12) and r.va[1] == pytest.approx(0.0, abs=1e-12)

    def test_two_bus_closed_form(self):
        r = solve_conventional_nr(two_bus(p_load=1.0))
        expected = oracles.two_bus_lossless(1.0, 0.1)
        assert r.converged
        assert abs(r.voltage[1] - expected) < 1e-8

    def test_ieee14(self, oracle, ieee14):
        r = oracle["ieee14"]
        assert r.converged and r.iterations <= 6
        s = np.array([complex(b.p, b.q) for b in r.buses])
        sched = ieee14.scheduled_power()
        pq = [k for k, b in enumerate(ieee14.buses) if b.kind is BusKind.PQ]
        pv = [k for k, b in enumerate(ieee14.buses) if b.kind is BusKind.PV]
        assert np.abs(s[pq] - sched[pq]).max() < 1e-8
        assert np.abs(s[pv].real - sched[pv].real).max() < 1e-8

    def test_refactorizes_every_iteration(self, oracle):
        r = oracle["ieee118"]
        assert r.factorizations == r.iterations


@pytest.mark.parametrize("name", SYSTEMS)
class TestCrossMethod:
    def test_ci_newton(self, name, cases, oracle):
        r = solve_ci_newton(cases[name])
        assert r.converged
        assert_same_voltages(r, oracle[name])
        assert r.factorizations == r.iterations

    def test_ci_linear(self, name, cases, oracle):
        r = solve_ci_linear(cases[name])
        assert r.converged and r.iterations <= 50
        assert_same_voltages(r, oracle[name])
        assert r.iterations >= solve_ci_newton(cases[name]).iterations

    def test_ci_pmu_exact(self, name, cases, oracle, exact_angles):
        r = solve_ci_pmu(cases[name], exact_angles[name])
        assert r.converged
        assert r.factorizations == 1
        assert_same_voltages(r, oracle[name])

    @pytest.mark.parametrize("fn", NON_PMU + ["pmu"])
    def test_monotonic_tail(self, name, cases, exact_angles, fn):
        r = solve_ci_pmu(cases[name], exact_angles[name]) if fn == "pmu" else fn(cases[name])
        tail = r.trace[-3:]
        assert len(tail) == 3
        assert all(b < a for a, b in zip(tail, tail[1:]))

    @pytest.mark.parametrize("fn", NON_PMU)
    def test_solved_physics(self, name, cases, fn):
        case = cases[name]
        r = fn(case)
        sched = case.scheduled_power()
        for k, (bus, res) in enumerate(zip(case.buses, r.buses)):
            if bus.kind is BusKind.PQ:
                assert abs(complex(res.p, res.q) - sched[k]) < 1e-8
            elif bus.kind is BusKind.PV:
                assert abs(res.vm - bus.v_target) < 1e-8


def test_ci_linear_all_pq_factors_once():
    r = solve_ci_linear(radial3())
    assert r.converged and r.iterations > 1
    assert r.factorizations == 1
    assert_same_voltages(r, solve_conventional_nr(radial3()), 1e-8)


def test_ci_newton_two_bus():
    r = solve_ci_newton(two_bus(p_load=1.0))
    assert abs(r.voltage[1] - oracles.two_bus_lossless(1.0, 0.1)) < 1e-8


class TestPmu:
    def test_perturbed_ieee14_order_of_magnitude(self, ieee14, oracle, exact_angles):
        shifted = {k: a + 0.01 for k, a in exact_angles["ieee14"].items()}
        r = solve_ci_pmu(ieee14, shifted)
        assert r.converged and r.factorizations == 1
        dvm = np.abs(np.array(r.vm) - oracle["ieee14"].vm).max()
        dva = np.abs(np.array(r.va) - oracle["ieee14"].va).max()
        assert 0.00029 / 10 <= dvm <= 0.00029 * 10
        assert 0.00267 / 10 <= dva <= 0.00267 * 10

    def test_pv_magnitude_exact(self, ieee118, exact_angles):
        r = solve_ci_pmu(ieee118, exact_angles["ieee118"])
        for bus, res in zip(ieee118.buses, r.buses):
            if bus.kind is BusKind.PV:
                assert res.vm == pytest.approx(bus.v_target, abs=1e-14)

    def test_missing_angle(self, ieee14, exact_angles):
        partial = dict(exact_angles["ieee14"])
        del partial[6]
        with pytest.raises(MissingPmuAngleError, match="6"):
            solve_ci_pmu(ieee14, partial)

    def test_pv_reactive_output(self, ieee14, oracle, exact_angles):
        r = solve_ci_pmu(ieee14, exact_angles["ieee14"])
        got = {g.bus: g.q_g for g in r.generators}
        for g in oracle["ieee14"].generators:
            assert got[g.bus] == pytest.approx(g.q_g, abs=1e-5)


class TestQLimits:
    @pytest.mark.parametrize("method", list(Method))
    def test_unbounded_no_events(self, method, ieee14, exact_angles):
        unbounded = replace(ieee14, generators=[replace(g, q_min=-math.inf, q_max=math.inf)
                                                for g in ieee14.generators])
        opts = SolverOptions(enforce_q_limits=True, method=method)
        r = solve(unbounded, opts, pmu=exact_angles["ieee14"])
        assert r.converged and r.events == []

    def clamped(self, ieee14):
        gens = [replace(g, q_max=0.0) if g.bus == 6 else g for g in ieee14.generators]
        return replace(ieee14, generators=gens)

    @pytest.mark.parametrize("method", [Method.CONVENTIONAL, Method.CI_NEWTON, Method.CI_LINEAR])
    def test_bus6_switches(self, method, ieee14):
        r = solve(self.clamped(ieee14), SolverOptions(enforce_q_limits=True, method=method))
        assert r.converged
        assert [e["bus"] for e in r.events if e["limit"] == "q_max"] == [6]
        assert r.vm[list(r.bus_ids).index(6)] < 1.07
        assert {g.bus: g.q_g for g in r.generators}[6] == pytest.approx(0.0, abs=1e-12)

    def test_deterministic(self, ieee14):
        opts = SolverOptions(enforce_q_limits=True)
        assert solve(self.clamped(ieee14), opts).events == solve(self.clamped(ieee14), opts).events

    def test_limits_off_by_default(self, ieee14):
        r = solve(self.clamped(ieee14))
        assert r.events == []
        assert enforce_q_limits(r, self.clamped(ieee14))[0].bus == 6


class TestRecoverOutputs:
    def test_lossless_two_bus(self):
        r = solve_conventional_nr(two_bus(p_load=1.0))
        assert r.generators[0].p_g == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("name", SYSTEMS)
    def test_losses_balance(self, name, cases, cdf_path, oracle):
        _, _, branches = oracles.read_cdf_plain(cdf_path[name].read_text())
        r = oracle[name]
        v = dict(zip(r.bus_ids, r.voltage))
        losses = oracles.branch_losses(branches, v)
        case = cases[name]
        gen = sum(g.p_g for g in r.generators)
        load = sum(ld.p_l for ld in case.loads)
        # bus shunt conductance also absorbs active power
        shunt = sum(b.shunt_g * abs(v[b.id]) ** 2 for b in case.buses)
        assert gen - load == pytest.approx(losses + shunt, abs=1e-8)

    def test_split_by_reactive_range(self):
        case = NetworkCase([Bus(1, BusKind.SLACK), Bus(2)], [Branch(1, 2, 0.0, 0.1)],
                           [Generator(1, q_min=-1, q_max=1), Generator(1, q_min=-3, q_max=3)],
                           [Load(2, 0.0, 0.4)])
        v = solve_conventional_nr(case).voltage
        g = recover_outputs(case, assemble_ybus(case), np.array(v))
        assert g[1].q_g == pytest.approx(3 * g[0].q_g)
        assert g[0].p_g == pytest.approx(g[1].p_g)


class TestDivergence:
    def test_heavy_load_reports(self):
        case = two_bus(p_load=8.0, q_load=2.0)
        for fn in NON_PMU:
            r = fn(case, SolverOptions(max_iterations=20))
            assert not r.converged
            assert r.message
            assert len(r.trace) == r.iterations + 1 <= 21

    def test_iteration_cap(self, ieee118):
        r = solve_ci_linear(ieee118, SolverOptions(max_iterations=3))
        # trace[0] is the starting point
        assert not r.converged and r.iterations == 3 and len(r.trace) == 4
        assert "3 iterations" in r.message

    def test_slack_excluded(self, ieee14):
        # a wrong slack P schedule never enters the norm
        gens = [replace(g, p_g=5.0) if g.bus == 1 else g for g in ieee14.generators]
        a = solve_ci_newton(ieee14)
        b = solve_ci_newton(replace(ieee14, generators=gens))
        assert a.trace == b.trace


@pytest.mark.parametrize("kwargs", [{"tolerance": 0}, {"max_iterations": 0}, {"method": "fast"}])
def test_bad_options(kwargs):
    with pytest.raises(ValueError):
        SolverOptions(**kwargs)
