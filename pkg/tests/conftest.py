import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from msgmm.core import Spectrum

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def gaussians(x, heights_or_areas, mus, sigmas, areas=True):
    """Sum of Gaussians on ``x``; ``areas`` selects area (True) or peak-height weights."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for a, m, s in zip(heights_or_areas, mus, sigmas):
        g = np.exp(-0.5 * ((x - m) / s) ** 2)
        out += a * g / (s * np.sqrt(2 * np.pi)) if areas else a * g
    return out


@pytest.fixture
def grid():
    return 2000.0 + 0.8 * np.arange(10000)


@pytest.fixture
def short_grid():
    return 2900.0 + 0.8 * np.arange(600)


def make_spectrum(x, y):
    return Spectrum(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
