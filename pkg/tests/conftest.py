import numpy as np
import pytest

from tomonet import rng as R
from tomonet import states


@pytest.fixture
def rng():
    return R.make_rng(20240601)


@pytest.fixture
def mixed_states():
    def make(n, seed=0):
        return [states.random_mixed_state(R.child_rng(seed, "fixture", k)) for k in range(n)]

    return make


def bell_phi_plus():
    v = np.zeros(4, dtype=complex)
    v[[0, 3]] = 1 / np.sqrt(2)
    return np.outer(v, v.conj())


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
