import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cipflow.caseio import (
    BusResult,
    GenResult,
    SolutionReport,
    parse_cdf,
    parse_native,
    read_case,
    read_solution,
    serialize,
    write_solution,
)
from cipflow.exceptions import CaseParseError
from cipflow.model import Branch, BranchKind, Bus, BusKind, Generator, Load, NetworkCase


class TestCdf:
    def test_ieee14_counts(self, ieee14):
        assert len(ieee14.buses) == 14
        assert len(ieee14.branches) == 20
        assert sorted(g.bus for g in ieee14.generators) == [1, 2, 3, 6, 8]
        assert [b.id for b in ieee14.buses if b.kind is BusKind.SLACK] == [1]
        assert ieee14.base_mva == 100.0

    def test_ieee118_counts(self, ieee118):
        assert len(ieee118.buses) == 118
        assert len(ieee118.branches) == 186
        assert len(ieee118.generators) == 54
        assert [b.id for b in ieee118.buses if b.kind is BusKind.SLACK] == [69]
        assert ieee118.buses[68].angle_init == pytest.approx(math.radians(30.0))

    def test_ieee14_details(self, ieee14):
        by_id = {b.id: b for b in ieee14.buses}
        assert by_id[6].kind is BusKind.PV and by_id[6].v_target == 1.07
        assert by_id[9].shunt_b == 0.19
        xf = [br for br in ieee14.branches if br.kind is BranchKind.TRANSFORMER]
        assert [(br.from_bus, br.to_bus, br.tap) for br in xf] == [(4, 7, 0.978), (4, 9, 0.969), (5, 6, 0.932)]
        gen6 = next(g for g in ieee14.generators if g.bus == 6)
        assert (gen6.q_min, gen6.q_max) == (-0.06, 0.24)

    def test_per_unit_audit(self, ieee14, cdf_path):
        base, buses, _ = oracles.read_cdf_plain(cdf_path["ieee14"].read_text())
        expected = sum(b["load_mw"] for b in buses) / base
        assert sum(ld.p_l for ld in ieee14.loads) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(2.59)

    def test_idempotent(self, cdf_path):
        text = cdf_path["ieee14"].read_text()
        assert parse_cdf(text) == parse_cdf(text)

    def test_truncated_bus_section(self, cdf_path):
        lines = cdf_path["ieee14"].read_text().splitlines()
        cut = lines[:lines.index("-999")]
        with pytest.raises(CaseParseError, match="BUS DATA"):
            parse_cdf("\n".join(cut))

    def test_bad_field_reports_line(self, cdf_path):
        lines = cdf_path["ieee14"].read_text().splitlines()
        lines[4] = lines[4][:40] + "   xx.x  " + lines[4][49:]
        with pytest.raises(CaseParseError) as err:
            parse_cdf("\n".join(lines))
        assert err.value.line == 5
        assert "load_mw" in str(err.value)

    def test_unknown_branch_bus(self, cdf_path):
        lines = cdf_path["ieee14"].read_text().splitlines()
        k = lines.index("-999") + 2
        lines[k] = "  99" + lines[k][4:]
        with pytest.raises(CaseParseError, match="99") as err:
            parse_cdf("\n".join(lines))
        assert err.value.line == k + 1

    def test_missing_branch_section(self, cdf_path):
        text = cdf_path["ieee14"].read_text()
        head = text[:text.index("BRANCH DATA")]
        with pytest.raises(CaseParseError, match="BRANCH DATA"):
            parse_cdf(head)


def minimal_doc():
    return {
        "name": "two-bus",
        "base_mva": 100.0,
        "buses": [{"id": 1, "kind": "Slack", "v_target": 1.0}, {"id": 2, "kind": "PQ"}],
        "branches": [{"from_bus": 1, "to_bus": 2, "r": 0.0, "x": 0.1}],
        "generators": [{"bus": 1}],
        "loads": [{"bus": 2, "p_l": 0.5, "q_l": 0.1}],
    }


class TestNative:
    def test_round_trip_ieee(self, ieee14, ieee118):
        for case in (ieee14, ieee118):
            assert parse_native(serialize(case)) == case

    def test_minimal(self):
        case = parse_native(json.dumps(minimal_doc()))
        assert case.n_bus == 2
        assert case.loads == (Load(2, 0.5, 0.1),)
        assert case.generators[0].q_max == math.inf

    def test_generator_at_absent_bus(self):
        doc = minimal_doc()
        doc["generators"] = [{"bus": 42}]
        with pytest.raises(CaseParseError, match="42") as err:
            parse_native(json.dumps(doc))
        assert err.value.path == "$.generators[0].bus"

    def test_schema_path(self):
        doc = minimal_doc()
        doc["branches"][0]["x"] = "big"
        with pytest.raises(CaseParseError) as err:
            parse_native(json.dumps(doc))
        assert err.value.path == "$.branches[0].x"

    def test_bad_json(self):
        with pytest.raises(CaseParseError) as err:
            parse_native('{"buses": [\n,]}')
        assert err.value.line == 2

    def test_read_case_dispatch(self, tmp_path, ieee14, cdf_path):
        p = tmp_path / "case.json"
        p.write_text(serialize(ieee14))
        assert read_case(p) == ieee14
        assert read_case(cdf_path["ieee14"]) == ieee14
        with pytest.raises(CaseParseError):
            read_case(tmp_path / "missing.cdf")


finite = st.floats(-5, 5, allow_nan=False)


@st.composite
def small_cases(draw):
    n = draw(st.integers(1, 5))
    kinds = [BusKind.SLACK] + [draw(st.sampled_from([BusKind.PV, BusKind.PQ])) for _ in range(n - 1)]
    buses = [Bus(k + 1, kinds[k], draw(st.floats(0.9, 1.1)), draw(finite), draw(finite), draw(finite))
             for k in range(n)]
    branches = [
        Branch(k + 1, draw(st.integers(1, k)), draw(st.floats(0, 1)), draw(st.floats(0.01, 1)))
        if draw(st.booleans()) else
        Branch(k + 1, draw(st.integers(1, k)), 0.0, draw(st.floats(0.01, 1)), 0.0,
               draw(st.floats(0.8, 1.2)), BranchKind.TRANSFORMER)
        for k in range(1, n)
    ]
    limit = st.one_of(st.just(math.inf), finite)
    generators = [Generator(b.id, draw(finite), draw(finite), -draw(limit), draw(limit))
                  for b in buses if b.kind is not BusKind.PQ]
    loads = [Load(draw(st.integers(1, n)), draw(finite), draw(finite)) for _ in range(draw(st.integers(0, 3)))]
    return NetworkCase(buses, branches, generators, loads, draw(st.floats(1, 1000)), draw(st.text(max_size=8)))


@settings(max_examples=100, deadline=None)
@given(small_cases())
def test_native_round_trip_random(case):
    assert parse_native(serialize(case)) == case


def report(trace=()):
    return SolutionReport(
        method="ci-newton", converged=True,
        buses=[BusResult(1, 1.06, 0.0, 2.324, -0.165), BusResult(2, 1.0123456789012345, -0.0869, 0.183, 0.30857)],
        generators=[GenResult(1, 2.324, -0.165)],
        iterations=3, factorizations=3, max_mismatch=1e-12, wall_time=0.01, trace=list(trace), case_name="t",
    )


class TestWriteSolution:
    def test_csv_layout(self):
        lines = write_solution(report(), "csv").splitlines()
        meta = [ln for ln in lines if ln.startswith("#")]
        body = [ln for ln in lines if not ln.startswith("#")]
        assert meta and all("=" in ln for ln in meta)
        assert body[0] == "bus,vm_pu,va_rad,p_pu,q_pu"
        assert len(body) == 1 + 2

    def test_json_csv_agree(self):
        r = report([0.1, 1e-5, 1e-12])
        doc = json.loads(write_solution(r, "json"))
        rows = [ln.split(",") for ln in write_solution(r, "csv").splitlines() if ln[:1].isdigit()]
        for bus, row in zip(doc["buses"], rows):
            assert int(row[0]) == bus["id"]
            for key, text in zip(("vm", "va", "p", "q"), row[1:]):
                assert f"{float(text):.12g}" == f"{bus[key]:.12g}"

    @pytest.mark.parametrize("fmt", ["json", "csv"])
    def test_deterministic(self, fmt):
        assert write_solution(report([1.0, 0.5]), fmt) == write_solution(report([1.0, 0.5]), fmt)

    def test_json_round_trip(self):
        r = report([0.3, 0.01])
        assert read_solution(write_solution(r, "json")) == r

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            write_solution(report(), "xml")
