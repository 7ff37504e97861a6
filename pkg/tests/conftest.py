import pytest


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the terminal summary prints them in order."""
    table = request.config._acceptance

    def record(number: int, passed: bool, detail: str) -> bool:
        table[number] = (passed, detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = getattr(config, "_acceptance", {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        passed, detail = table[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
