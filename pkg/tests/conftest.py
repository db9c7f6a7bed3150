import pytest

from qikt.grid import PhysicalConstants, SpatialGrid

# One line per acceptance criterion, printed at the end of the session.
CRITERIA_LINES = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    CRITERIA_LINES[number] = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA_LINES):
        terminalreporter.write_line(CRITERIA_LINES[k])


@pytest.fixture(scope="session")
def consts():
    return PhysicalConstants()


@pytest.fixture(scope="session")
def grid():
    return SpatialGrid.uniform(512, 20.0)
