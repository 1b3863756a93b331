"""Shared test hooks: the acceptance battery reports one line per criterion.

Verdict lines are collected while the tests run and replayed in a terminal
section after the suite, outside the capture machinery, so the pass/fail
status of each criterion is visible in plain `pytest -v` output.
"""

VERDICTS = []


def record_verdict(line):
    VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in VERDICTS:
        terminalreporter.write_line(line)
