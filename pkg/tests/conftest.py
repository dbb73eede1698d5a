import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record a one-line pass/fail verdict shown in the terminal summary."""

    def record(label, ok, detail=""):
        _VERDICTS.append(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
