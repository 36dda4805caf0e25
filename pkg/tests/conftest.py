import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ebdiscrim import ExperimentDesign, build_grid, likelihood_matrix  # noqa: E402

_acceptance = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_problem():
    """K=5, L=2 likelihood matrix shared by several modules."""
    design = ExperimentDesign(2)
    grid = build_grid(5)
    return grid, design, likelihood_matrix(grid, design)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.outcome != "passed":
        prev = _acceptance.get(name)
        if prev is None or prev == "PASS":
            _acceptance[name] = "PASS" if report.outcome == "passed" else report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        status = _acceptance[name]
        label = "PASS" if status == "PASS" else ("SKIP" if status == "SKIPPED" else "FAIL")
        terminalreporter.write_line(f"{label}  {name}")
