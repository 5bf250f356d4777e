import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion from the build contract")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = _acceptance_markers.get(report.nodeid)
    if marker is None:
        return
    number, title = marker
    entry = _acceptance.setdefault(number, {"title": title, "ok": True, "tests": []})
    entry["ok"] &= report.passed
    entry["tests"].append((report.nodeid.split("::")[-1], report.outcome))


_acceptance_markers = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            _acceptance_markers[item.nodeid] = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        e = _acceptance[number]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {e['title']}")
        if not e["ok"]:
            for name, outcome in e["tests"]:
                terminalreporter.write_line(f"         {name}: {outcome}")


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(12345)
