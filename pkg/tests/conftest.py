import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trackmpc import config, sim, synthesis

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "trackmpc" / "fixtures"

settings.register_profile(
    "default", deadline=None, max_examples=40, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def fixture_path(name):
    return FIXTURES / f"{name}.yaml"


@pytest.fixture(scope="session")
def heli_config():
    return config.load_config(fixture_path("helicopter_corrected"))


@pytest.fixture(scope="session")
def heli_design(heli_config):
    c = heli_config
    return synthesis.synthesize(c.plant, c.exo, c.Q, c.T0, c.Lambda, c.horizon, cap=c.moas_cap)


@pytest.fixture(scope="session")
def heli_run(heli_config, heli_design):
    """The 2500-step closed loop under strict runtime checks."""
    c = heli_config
    log = sim.run_closed_loop(c.plant, heli_design, c.program, c.x0, 2500, strict=True)
    return log, sim.metrics(log, c.program.switch_steps, heli_design.weights.Q)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# One line per acceptance criterion, echoed in the terminal summary.
CRITERIA = []


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    CRITERIA.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(CRITERIA):
            terminalreporter.write_line(line)
