import pytest

_REPORT: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; all lines are printed in the terminal summary."""

    def add(criterion: str, ok: bool, detail: str):
        _REPORT.append(f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}")
        print(_REPORT[-1])
        return ok

    return add


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
