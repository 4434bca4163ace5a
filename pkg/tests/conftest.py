import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed_phase = report.failed or (report.when == "call" and hasattr(report, "wasxfail"))
    if report.when != "call" and not failed_phase:
        return
    entry = _CRITERIA.setdefault(item.nodeid, {"number": number, "title": title, "ok": True,
                                               "note": "", "props": item.user_properties})
    if failed_phase:
        entry["ok"] = False
        if hasattr(report, "wasxfail"):
            entry["note"] = f"known failure: {report.wasxfail}"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for entry in sorted(_CRITERIA.values(), key=lambda e: str(e["number"])):
        status = "PASS" if entry["ok"] else "FAIL"
        detail = "; ".join(f"{k}={v}" for k, v in entry["props"])
        line = f"[{status}] criterion {entry['number']}: {entry['title']}"
        if detail:
            line += f" ({detail})"
        if entry["note"]:
            line += f" -- {entry['note']}"
        tr.write_line(line)
