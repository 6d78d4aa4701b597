import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from heatbath.dilation import DilationBasis
from heatbath.model import build_derived, running_example

settings.register_profile(
    "repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

ACCEPTANCE_LINES = []


@pytest.fixture
def spec():
    return running_example()


@pytest.fixture
def confined():
    return running_example(c=(0.5, 0.25, 0.0))


@pytest.fixture
def derived(spec):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return build_derived(spec)


@pytest.fixture
def basis():
    return DilationBasis.running_example()


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


@pytest.fixture
def report_acceptance():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"ACCEPTANCE {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
