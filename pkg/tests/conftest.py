import pytest

from crcap.geometry import SystemParams
from crcap.montecarlo import DEFAULT_SEED, resolve_gains


@pytest.fixture(scope="session")
def calibrated():
    """Default parameters with gains calibrated on the default seed."""
    return resolve_gains(SystemParams(), DEFAULT_SEED, 1_000_000)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion."""

    def _report(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
