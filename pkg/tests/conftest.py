import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Record a one-line pass/fail verdict shown in the terminal summary."""

    def record(number, passed, detail):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        line = f"criterion {number:>2}: {status}  {detail}"
        _LINES.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_LINES):
        terminalreporter.write_line(line)
