import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# rows of the 3 x 10 worked example
EXAMPLE = np.array(
    [
        [1, 2, 14, 9, -14, 9, -1, 5, -11, 7],
        [8, 2, -6, -13, -24, -13, -6, 1, 4, -11],
        [-3, -2, 3, -1, -6, 3, 18, -2, -2, -19],
    ],
    dtype=np.float64,
)

EXAMPLE_S08 = np.array(
    [
        [0, 0, 14.68, 0, -14.68, 0, 0, 0, -2.31, 0],
        [0, 0, 0, -5.17, -27.37, -5.17, 0, 0, 0, -1.13],
        [0, 0, 0, 0, 0, 0, 17.31, 0, 0, -19.61],
    ]
)

EXAMPLE_S09 = np.array(
    [
        [0, 0, 14, 0, -14, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, -24, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, 16.29, 0, 0, -20.37],
    ]
)


@pytest.fixture
def example():
    return EXAMPLE.copy()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
