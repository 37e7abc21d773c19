import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one criterion's outcome; the summary is printed at the end of the run."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        _ACCEPTANCE[number] = (title, bool(ok), detail)
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        line = f"{'PASS' if ok else 'FAIL'}  {number:2d}. {title}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)
