"""Collects acceptance outcomes and prints one line per criterion."""

import pytest

_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = marker.args
        entry = _outcomes.setdefault(number, {"title": title, "passed": True, "details": []})
        entry["passed"] &= report.passed
        entry["details"].extend(v for k, v in item.user_properties if k == "detail")
        if report.failed and report.when == "setup":
            entry["details"].append(f"{item.name}: setup failed")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        entry = _outcomes[number]
        status = "PASS" if entry["passed"] else "FAIL"
        details = "; ".join(entry["details"])
        terminalreporter.write_line(f"criterion {number:2d} {status}  {entry['title']}: {details}")
