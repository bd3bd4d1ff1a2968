import pytest

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""
    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE[n] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
