import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from fibernli.kernels import QuadratureConfig  # noqa: E402
from fibernli.linkmodel import LinkConfig, PulseShape  # noqa: E402

# PASS/FAIL lines from test_acceptance.py, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def link():
    return LinkConfig()


@pytest.fixture(scope="session")
def pulse():
    return PulseShape()


@pytest.fixture(scope="session")
def coarse_quad():
    return QuadratureConfig(points_per_axis=101)
