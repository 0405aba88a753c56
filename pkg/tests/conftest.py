import numpy as np
import pytest

from qswitch.processes import switch_process


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def ideal_switch():
    return switch_process("zero", "plus")


@pytest.fixture(scope="session")
def ideal_witness(ideal_switch):
    from qswitch.witness import optimize_witness

    return optimize_witness(ideal_switch)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
