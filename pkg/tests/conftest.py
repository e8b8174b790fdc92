import numpy as np
import pytest

from qbirthmark import RandomStream, eigensolve, sample_goe


@pytest.fixture(scope="session")
def goe200():
    return eigensolve(sample_goe(200, RandomStream(11)))


def flip_model():
    """H = [[0, 1], [1, 0]]: the two-level Rabi flip."""
    from qbirthmark import Hamiltonian
    return eigensolve(Hamiltonian(np.array([[0.0, 1.0], [1.0, 0.0]])))


@pytest.fixture
def flip():
    return flip_model()


ACCEPTANCE_LINES = {}


def record_criterion(number, name, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
