import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from krein.examples import exk_fixture

SEED = int(os.environ.get("KREIN_SEED", "42"))

settings.register_profile(
    "krein",
    derandomize=True,
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("krein")


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture(scope="session")
def exk100():
    return exk_fixture(1.0, 100)


@pytest.fixture(scope="session")
def exk200():
    return exk_fixture(1.0, 200)


def exact_gamma(tau, t, s):
    """Resolvent of k(t) = -e^{it}: -e^{i(t-s)} / (1 + tau)."""
    return -np.exp(1j * (t - s)) / (1 + tau)


def exact_potential(tau):
    return -np.exp(1j * tau) / (1 + tau)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
