"""Acceptance reporting: one PASS/FAIL line per criterion after the run."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    number, title = mark.args
    entry = _results.setdefault(number, {"title": title, "ok": True, "details": []})
    if report.failed or report.skipped:
        entry["ok"] = False
    if report.when == "call":
        entry["details"].extend(v for k, v in item.user_properties if k == "measured")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        tr.write_line(f"criterion {number}: {'PASS' if entry['ok'] else 'FAIL'}  {entry['title']}")
        for detail in entry["details"]:
            tr.write_line(f"    {detail}")
