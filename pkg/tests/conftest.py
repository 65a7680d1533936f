"""Shared pytest wiring for the suite."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the release-gate verdict lines after the normal summary.

    test_acceptance records one line per criterion; repeating them here keeps
    them visible even when pytest captures stdout for passing tests.
    """
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("release gate")
    for line in lines:
        terminalreporter.write_line(line)
