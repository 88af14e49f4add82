"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

import re

_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not m or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    detail = dict(report.user_properties).get("detail", "")
    _RESULTS[int(m.group(1))] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        status, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
