import pytest

_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record a one-line PASS/FAIL verdict, printed in the terminal summary, then assert it."""
    def record(criterion: str, ok: bool, detail: str):
        _VERDICTS.append(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
