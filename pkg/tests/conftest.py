import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from robust_policy import dgp
from robust_policy.core import Dataset

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def synth_small():
    """Gamma* = 2 benchmark draw, small enough for per-test nuisance fits."""
    data, hidden = dgp.generate(dgp.SyntheticSpec(2.0, 1200, 3))
    return data, hidden


@pytest.fixture
def toy_data():
    rng = np.random.default_rng(0)
    n = 40
    x = rng.uniform(-1, 1, (n, 2))
    a = rng.integers(0, 3, n)
    y = x[:, 0] - a + rng.normal(size=n)
    return Dataset(y, a, x, 3)


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""
    log = []
    request.config._acceptance_log = log
    return log


def pytest_terminal_summary(terminalreporter, config):
    log = getattr(config, "_acceptance_log", None)
    if log:
        terminalreporter.section("acceptance criteria")
        for line in sorted(log, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
