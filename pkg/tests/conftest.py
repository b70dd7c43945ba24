import re

import numpy as np
import pytest

from hemiscan.planner import default_rig

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def rig():
    return default_rig()


@pytest.fixture(scope="session")
def rig_no_riser():
    return default_rig(riser_height=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    m = re.search(r"test_acceptance\.py::test_c(\d+)_", report.nodeid)
    if m:
        n = int(m.group(1))
        ok = report.passed
        _ACCEPTANCE[n] = _ACCEPTANCE.get(n, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if _ACCEPTANCE[n] else 'FAIL'}")
