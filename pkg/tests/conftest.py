from __future__ import annotations

import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from parametrix.model import build_model

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile(
    "stress", deadline=None, max_examples=1000, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def constant_model():
    return build_model({"family": "constant", "sigma": 1.0, "m": 0.0, "d": 1})


@pytest.fixture(scope="session")
def sin1d():
    return build_model({"family": "sin1d", "a": 1.0, "b": 0.5, "c": 0.5})


@pytest.fixture(scope="session")
def sin1d_modulated():
    return build_model({"family": "sin1d", "a": 1.0, "b": 0.5, "c": 0.5, "e": 0.25})


@pytest.fixture(scope="session")
def sin1d_skew():
    return build_model({"family": "sin1d", "a": 1.0, "b": 0.5, "c": 0.5, "innovation": "skew", "skew": 0.8})


@pytest.fixture(scope="session")
def sin2d():
    return build_model({"family": "sin2d_diag", "a": 1.0, "b": 0.5, "c": 0.5})


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
