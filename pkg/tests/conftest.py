import pytest

_LINES = {}


@pytest.fixture
def acceptance():
    """``report(number, title, ok, detail)`` records one PASS/FAIL line per criterion."""

    def report(number, title, ok, detail=""):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  | {detail}"
        _LINES[number] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_LINES):
            terminalreporter.write_line(_LINES[n])
