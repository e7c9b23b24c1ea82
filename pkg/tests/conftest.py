import numpy as np
import pytest

from gvssb.preprocess import standardize
from gvssb.types import make_grouped_design


def random_problem(seed, n=50, G=20, p_i=3, active=4, scale=2.0):
    """Standardized design and centered response with a few active groups."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, G * p_i))
    theta = np.zeros(G * p_i)
    theta[:active * p_i] = scale * rng.standard_normal(active * p_i)
    y = X @ theta + rng.standard_normal(n)
    design, yc, info = standardize(make_grouped_design(X, np.repeat(np.arange(G), p_i)), y)
    return design, yc, info


@pytest.fixture
def small_problem():
    return random_problem(0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
