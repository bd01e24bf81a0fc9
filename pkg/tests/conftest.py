import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the terminal summary lists them all."""

    def record(number, passed, detail):
        line = f"CRITERION {number} {'PASS' if passed else 'FAIL'}: {detail}"
        print(line)
        _LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
