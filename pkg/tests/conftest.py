import os

import pytest

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

CRITERIA = range(1, 11)
_verdicts: dict[int, tuple[bool, str]] = {}
_seen: set[int] = set()


class Criterion:
    """Records one acceptance verdict; the summary prints a line per criterion."""

    def __init__(self, number: int, title: str):
        _seen.add(number)
        self.number = number
        self.title = title

    def check(self, ok: bool, detail: str):
        _verdicts[self.number] = (bool(ok), f"{self.title}: {detail}")
        assert ok, f"criterion {self.number}: {self.title}: {detail}"


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _seen:
        return
    terminalreporter.section("acceptance criteria")
    for number in CRITERIA:
        if number in _verdicts:
            ok, text = _verdicts[number]
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}")
        elif number in _seen:
            terminalreporter.write_line(f"FAIL criterion {number}: raised before reaching a verdict")
