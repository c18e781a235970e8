import pytest

_LINES: list[tuple[int, str]] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion; returns ``ok``."""

    def report(k: int, ok: bool, detail: str) -> bool:
        line = f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}"
        _LINES.append((k, line))
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
