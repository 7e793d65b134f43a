import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}"
        _LINES.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(_LINES):
        terminalreporter.write_line(line)
