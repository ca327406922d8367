import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))  # lets tests import the oracle module

_LINES: dict[int, str] = {}


class Recorder:
    """Stores one pass/fail line per acceptance criterion for the terminal summary."""

    def __call__(self, number: int, passed: bool, detail: str) -> bool:
        _LINES[number] = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}"
        print(_LINES[number])
        return passed


@pytest.fixture
def criterion():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_LINES):
        terminalreporter.write_line(_LINES[number])
