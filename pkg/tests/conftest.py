from pathlib import Path

import pytest
from hypothesis import settings

from pneuforce.calibration import SERIES_LAYOUT, CalibrationDataset, Series, parse_dataset

DATA = Path(__file__).parent / "data"

settings.register_profile("default", deadline=None)
settings.load_profile("default")

_ACCEPTANCE = []


def make_dataset(levels, columns, zeros, zero_ends=None, **meta):
    """Build a dataset from per-series reading columns and force-0 readings."""
    zero_ends = zero_ends or {}
    series = {
        sid: Series(sid, deg, direction, tuple(columns[sid]), zeros[sid], zero_ends.get(sid))
        for sid, (deg, direction) in SERIES_LAYOUT.items()
    }
    return CalibrationDataset(tuple(levels), series, **meta)


@pytest.fixture(scope="session")
def prototype():
    return parse_dataset((DATA / "prototype_calibration.csv").read_text())


@pytest.fixture
def acceptance():
    """Record one line per acceptance criterion for the terminal summary."""

    def record(number, title, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session", autouse=True)
def _warm_jit():
    # compile the kernels once so timed tests measure integration, not compilation
    from pneuforce.dynamics import ForceProfile, SimulationConfig, settle_under_load, simulate
    from pneuforce.core_model import GasProperties, PistonParams, SensorState, make_geometry

    simulate(ForceProfile("constant", (0.0,)), cfg=SimulationConfig(t_end=1e-4))
    settle_under_load(SensorState(4e-3, 0.0, 2.37e5), 0.0, 1.0, make_geometry(), GasProperties(),
                      PistonParams(), SimulationConfig(), ramp_time=1e-4, max_time=1.0)
