import pytest

_LINES = {}


@pytest.fixture
def criterion():
    """record(number, ok, detail) keeps one summary line per acceptance criterion."""
    def record(number: int, ok: bool, detail: str) -> bool:
        _LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_LINES[number])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(_LINES):
            terminalreporter.write_line(_LINES[number])
