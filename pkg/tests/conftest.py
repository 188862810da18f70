"""Aggregates acceptance-criterion results and prints one PASS/FAIL line
per criterion at the end of the session."""

import re

_CRITERION_RE = re.compile(r"test_criterion_(\d+)")
_results: dict[int, list[bool]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    match = _CRITERION_RE.search(report.nodeid)
    if match:
        _results.setdefault(int(match.group(1)), []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    try:
        from test_acceptance import CRITERIA
    except ImportError:
        CRITERIA = {}
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        outcomes = _results[number]
        verdict = "PASS" if all(outcomes) else "FAIL"
        name = CRITERIA.get(number, "")
        terminalreporter.write_line(
            f"criterion {number} ({name}): {verdict} "
            f"[{sum(outcomes)}/{len(outcomes)} checks]")
