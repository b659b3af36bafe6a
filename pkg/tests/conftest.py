import numpy as np
import pytest

from diracflow.numerics import UnitsConfig, make_grid

# (criterion, passed, detail) rows from test_acceptance.py, echoed at the end of the session
ACCEPTANCE_ROWS: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_ROWS.append((name, bool(passed), detail))
    print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_ROWS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(ACCEPTANCE_ROWS, key=lambda r: int(r[0].split()[1].rstrip("ab:"))):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def units():
    return UnitsConfig()


@pytest.fixture
def grid1d():
    return make_grid(1, [32.0], [256])


@pytest.fixture
def grid2d():
    return make_grid(2, [16.0, 16.0], [32, 32])


def lattice_momentum(grid, n, axis=0):
    return 2 * np.pi * n / grid.extents[axis]
