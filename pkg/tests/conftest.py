import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from shallow_landscape.activations import parse_activation  # noqa: E402
from shallow_landscape.network import Dataset, NetworkParams  # noqa: E402

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

DIFFERENTIABLE = ("quad", "softplus:10", "sigmoid:4", "erf", "tanh")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_instance(rng, k, d, n, scale=1.0):
    """Random parameters and data with Gaussian labels."""
    W = rng.standard_normal((k, d)) * scale / np.sqrt(d)
    v = rng.standard_normal(k)
    X = rng.standard_normal((d, n))
    y = rng.standard_normal(n)
    return NetworkParams(v, W), Dataset(X, y)


@pytest.fixture(params=DIFFERENTIABLE)
def spec(request):
    return parse_activation(request.param)


ACCEPTANCE_LINES = []


def record_acceptance(number, ok, detail):
    """Queue one summary line; ``ok=None`` marks an informational line."""
    status = "INFO" if ok is None else ("PASS" if ok else "FAIL")
    ACCEPTANCE_LINES.append((number, f"CRITERION {number}: {status} {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES, key=lambda item: item[0]):
        terminalreporter.write_line(line)
