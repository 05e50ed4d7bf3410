import sys
from pathlib import Path

import pytest

from cipflow.caseio import load_case
from cipflow.model import assemble_ybus
from cipflow.solvers import pv_angles, solve_conventional_nr

DATA = Path(__file__).resolve().parents[1] / "src" / "cipflow" / "data"


@pytest.fixture(scope="session")
def cdf_path():
    return {"ieee14": DATA / "ieee14.cdf", "ieee118": DATA / "ieee118.cdf"}


@pytest.fixture(scope="session")
def ieee14():
    return load_case("ieee14")


@pytest.fixture(scope="session")
def ieee118():
    return load_case("ieee118")


@pytest.fixture(scope="session")
def cases(ieee14, ieee118):
    return {"ieee14": ieee14, "ieee118": ieee118}


@pytest.fixture(scope="session")
def oracle(cases):
    """Converged Newton-Raphson reference solution per IEEE case."""
    return {name: solve_conventional_nr(case) for name, case in cases.items()}


@pytest.fixture(scope="session")
def exact_angles(cases, oracle):
    return {name: pv_angles(oracle[name], case) for name, case in cases.items()}


@pytest.fixture(scope="session")
def ybus14(ieee14):
    return assemble_ybus(ieee14)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
