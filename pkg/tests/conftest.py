import numpy as np
import pytest

from lpbf_forecast.heatsim import GridSpec, LaserParams, simulate_tour
from lpbf_forecast.tour import raster_tour

_CRITERIA = []


@pytest.fixture
def criterion(request):
    """Record a named acceptance criterion's outcome for the terminal summary."""
    def record(label, ok, detail=""):
        _CRITERIA.append((label, bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {label}  {detail}")


@pytest.fixture(scope="session")
def raster_run_64():
    """256-move raster run on a 64x64 grid (beam waist scaled to the 128-grid value)."""
    grid = GridSpec(64, 64)
    return simulate_tour(raster_tour(16), grid, laser=LaserParams.from_cells(grid, omega_cells=17.5))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
