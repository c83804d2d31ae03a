import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(rng, m, p, n, rank_x=None, rank_a=None, sigma=1.0):
    """Random (X, A, Y); X has rank `rank_x` and A rank `rank_a` when given."""
    rank_x = min(m, p) if rank_x is None else rank_x
    x = rng.standard_normal((m, rank_x)) @ rng.standard_normal((rank_x, p))
    rank_a = min(p, n) if rank_a is None else rank_a
    a = rng.standard_normal((p, rank_a)) @ rng.standard_normal((rank_a, n))
    y = x @ a + sigma * rng.standard_normal((m, n))
    return x, a, y


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
