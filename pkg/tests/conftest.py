"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_OUTCOMES: dict[int, tuple[str, str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        prev = _OUTCOMES.get(number)
        if prev is None or prev[0] != "FAIL":
            _OUTCOMES[number] = ("FAIL" if failed else "PASS", title, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        status, title, duration = _OUTCOMES[number]
        terminalreporter.write_line(f"criterion {number:2d} [{title}]: {status} ({duration:.2f} s)")
