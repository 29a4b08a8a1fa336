import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------------------
# acceptance recorder: one PASS/FAIL line per criterion in the terminal summary

import contextlib
import time

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    @contextlib.contextmanager
    def run(number, title, limit_s):
        t0 = time.perf_counter()
        status = "FAIL"
        try:
            yield
            elapsed = time.perf_counter() - t0
            assert elapsed < limit_s, f"runtime {elapsed:.1f} s exceeds {limit_s} s"
            status = "PASS"
        finally:
            elapsed = time.perf_counter() - t0
            line = f"criterion {number:>2}: {status}  {title}  ({elapsed:.1f} s, limit {limit_s:g} s)"
            ACCEPTANCE_LINES.append((number, line))
            print(line)

    return run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
