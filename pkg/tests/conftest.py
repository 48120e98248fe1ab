import numpy as np
import pytest

from ctstokes.fem import assemble_system
from ctstokes.manufactured import AnalyticStokes, CaseData
from ctstokes.mesh import Rect, build_structured_mesh


@pytest.fixture(scope="session")
def small_system():
    return assemble_system(build_structured_mesh(Rect(), 4, 4), 1.0)


@pytest.fixture(scope="session")
def tiny_system():
    return assemble_system(build_structured_mesh(Rect(), 2, 2), 1.0)


@pytest.fixture(scope="session")
def case10():
    return AnalyticStokes(lam=10.0, mu=1.0)


@pytest.fixture(scope="session")
def data10(small_system, case10):
    return CaseData(small_system, case10)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
