import pytest

_verdicts = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the terminal summary."""

    def record(label, ok, detail=""):
        line = f"{label}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        _verdicts.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in _verdicts:
            terminalreporter.write_line(line)
