import numpy as np
import pytest

from gibbscmi.spectral import DenseOperator


def random_density(n_qubits, rng, full_rank=True):
    d = 2**n_qubits
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    M = G @ G.conj().T
    if full_rank:
        M += 0.05 * np.trace(M).real / d * np.eye(d)
    return DenseOperator(range(n_qubits), (2,) * n_qubits, M / np.trace(M).real)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# filled by test_acceptance, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
