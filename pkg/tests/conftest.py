import pytest

from ddplan.decomposition import run
from ddplan.grid import bundled_fixture, load_grid

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def toy6():
    return load_grid(bundled_fixture("toy6"))


@pytest.fixture(scope="session")
def toy6_runs(toy6):
    """Converged plans with and without flow-dependent risk, shared across modules."""
    return {"ddu": run(toy6), "no-ddu": run(toy6.without_ddu())}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
