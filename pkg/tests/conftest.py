import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def gauss_legendre_phi(n=64):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * np.pi * (t + 1), 0.5 * np.pi * w


_RESULTS = {}


@pytest.fixture
def record():
    """Store a one-line verdict for an acceptance criterion."""
    def _record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _RESULTS[number] = line
        print(line)
        return passed
    return _record


def pytest_sessionstart(session):
    session.config._t0 = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_RESULTS):
            terminalreporter.write_line(_RESULTS[number])
    elapsed = time.perf_counter() - getattr(config, "_t0", time.perf_counter())
    terminalreporter.write_line(f"suite wall time {elapsed:.0f} s (budget 1800 s)")
