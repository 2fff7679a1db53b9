import numpy as np
import pytest

from isopde.geometry import FiberSpec, flat, gaussian_slab, polar


@pytest.fixture
def flat_cylinder():
    return flat(0.0, 1.0, 2, FiberSpec.circle())


@pytest.fixture
def gaussian_circle():
    return gaussian_slab(-1.0, 1.0, 2, FiberSpec.circle())


@pytest.fixture
def polar_circle():
    return polar(1.0, 2.0, 2, FiberSpec.circle())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py::test_criterion_" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        ACCEPTANCE[name] = report.passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda n: int(n.split("_")[2])):
        status = "PASS" if ACCEPTANCE[name] else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
