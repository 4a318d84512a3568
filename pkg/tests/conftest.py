import numpy as np
import pytest

from periodic_loss import stochastic as st
from periodic_loss.utility import PeriodicProfile


@pytest.fixture
def sinusoid():
    return PeriodicProfile.sinusoid(1.75, 3.0, 24.0)


@pytest.fixture
def base_models():
    return st.InterArrivalModel.exponential(0.019), st.MaintenanceModel.exponential(0.47)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion and fail the test on FAIL."""

    def report(n, name, ok, detail):
        line = f"[acceptance {n:>2}] {'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _ACCEPTANCE.append((n, line))
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
