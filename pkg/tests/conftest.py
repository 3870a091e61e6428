import numpy as np
import pytest

from dislocation.elastostatics import LameParams
from dislocation.geometry import DomainPolygon, FaultGeometry, closed_closure

SQUARE = np.array([[0.35, 0.35], [0.65, 0.35], [0.65, 0.65], [0.35, 0.65]])


@pytest.fixture
def unit_domain():
    return DomainPolygon.unit_square()


@pytest.fixture
def clamped_domain():
    return DomainPolygon.unit_square(tags=("D", "D", "D", "D"), observation=())


@pytest.fixture
def square_fault():
    return FaultGeometry(SQUARE, closed=True)


@pytest.fixture
def square_closure(square_fault):
    return closed_closure(square_fault)


@pytest.fixture
def unit_params():
    return LameParams(1.0, 1.0)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        passed, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
