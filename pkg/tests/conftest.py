import numpy as np
import pytest

from meanvort.fields import Grid2D, flat_pinning, make_pinning
from meanvort.presets import random_potential, smooth_random_field

BOX = 8.0


@pytest.fixture
def grid64():
    return Grid2D(64, BOX)


@pytest.fixture
def grid128():
    return Grid2D(128, BOX)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def flat64(grid64):
    return flat_pinning(grid64)


@pytest.fixture
def rough64(grid64):
    """A generic smooth pinning weight with max |h| = 0.5."""
    return make_pinning(grid64, random_potential(grid64, 0.5, seed=3))


def smooth_field(grid, seed, kmax=4):
    return smooth_random_field(grid, np.random.default_rng(seed), kmax)


def rel_inf(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# One line per acceptance criterion, printed after the test summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
