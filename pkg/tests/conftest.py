import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlos_isac.core import SystemConfig

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def small_cfg():
    """One TDD period on 64 subcarriers: same structure as the default, fast to transform."""
    return SystemConfig(subcarrier_count=64, symbol_count_per_frame=140)


@pytest.fixture
def cfg():
    return SystemConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cache_dir():
    return os.environ.get("NLOS_ISAC_CACHE")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
