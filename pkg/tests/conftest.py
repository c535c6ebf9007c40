import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance verdict line; all lines are echoed in the terminal summary."""

    def _report(number: int, name: str, ok: bool, detail: str, seconds: float | None = None):
        timing = f" [{seconds:.1f} s]" if seconds is not None else ""
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}{timing}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
