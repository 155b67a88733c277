import numpy as np
import pytest

from quasilab.model import ModelParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny():
    """Smallest instance with a nontrivial exhaustive row: ell=2, m=2, kappa=2."""
    return ModelParams(ell=2, m=2, kappa=2, q=0.1, sigma=2.0, K=1)


def within_se(count, n, p, k=4.0):
    """True when an empirical count matches probability ``p`` within ``k`` binomial standard errors."""
    se = np.sqrt(n * p * (1 - p))
    return abs(count - n * p) <= k * se + 1e-9


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
