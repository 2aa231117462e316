import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# (criterion number, title, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  [{num:2d}] {title}: {detail}")
