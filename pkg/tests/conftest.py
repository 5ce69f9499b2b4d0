import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the outcome is read from the test report."""
    entry = {"id": request.node.nodeid, "label": None, "detail": ""}
    _CRITERIA.append(entry)

    def record(label, detail=""):
        entry["label"], entry["detail"] = label, detail
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        for e in _CRITERIA:
            if e["id"] == item.nodeid:
                e["passed"] = rep.passed


def pytest_terminal_summary(terminalreporter):
    rows = [e for e in _CRITERIA if e["label"]]
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for e in sorted(rows, key=lambda e: int(e["label"].split()[1].rstrip(":"))):
        status = "PASS" if e.get("passed") else "FAIL"
        terminalreporter.write_line(f"{status}  {e['label']}  {e['detail']}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
