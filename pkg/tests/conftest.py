import numpy as np
import pytest

from vexflow.mesh import build_structured, make_mesh_pair

UNIT_SQUARE = [(0.0, 1.0), (0.0, 1.0)]
UNIT_CUBE = [(0.0, 1.0)] * 3


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def square1():
    """Two triangles on the unit square."""
    return build_structured(2, [1, 1], UNIT_SQUARE)


@pytest.fixture(scope="session")
def square2():
    return build_structured(2, [2, 2], UNIT_SQUARE)


@pytest.fixture(scope="session")
def cube1():
    return build_structured(3, [1, 1, 1], UNIT_CUBE)


@pytest.fixture(scope="session")
def pair_2d(square2):
    """Fluid mesh at level 1, concentration mesh at level 2."""
    return make_mesh_pair(square2, 1, 2)


# -- acceptance report -------------------------------------------------------
ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str) -> None:
    """Log one acceptance criterion; printed again in the terminal summary."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
