import pytest

from tiwifi.config import SimParams

_CRITERIA_LINES = []


@pytest.fixture
def short_params():
    """Half-second runs: long enough to clear the 100 ms warmup."""
    return SimParams().with_duration("0.5")


@pytest.fixture(scope="session")
def report_criterion():
    """Record one PASS/FAIL line per acceptance criterion; returns ``ok``."""
    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _CRITERIA_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA_LINES:
            terminalreporter.write_line(line)
