import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; it is echoed in the terminal summary."""

    def record(line: str):
        _VERDICTS.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
