import numpy as np
import pytest

from nltiso.kernel import KernelSpec, KernelVector

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_kernel_vector(rng, order, n_nodes, width, low=0.1):
    entries = rng.uniform(low, 1.0, size=(order, n_nodes, width))
    return KernelVector(entries, tuple(range(order, order + width)), order + width - 1)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
