"""Calibration load schedules, synthetic calibration runs and the dataset CSV format.

A dataset holds six reading series in the usual rotated-mounting layout:
X1 and X2 increasing at 0 deg, X3/X4 increasing then decreasing at 360 deg,
X5/X6 increasing then decreasing at 180 deg. Readings are transducer volts
and force levels are kgf.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core_model import (
    GasProperties,
    PistonParams,
    SensorGeometry,
    SensorState,
    TransducerParams,
    kgf_to_newton,
    make_geometry,
    transducer_voltage,
)
from .dynamics import SimulationConfig, settle_under_load
from .errors import CalibrationError, NumericInstabilityError, ParseError, ScheduleError

MIN_LEVELS = 8
INCREASING = "increasing"
DECREASING = "decreasing"
UP_DOWN = "increasing_then_decreasing"

SERIES_PLAN = ((0, INCREASING), (0, INCREASING), (360, UP_DOWN), (180, UP_DOWN))
SERIES_LAYOUT = {
    "X1": (0, INCREASING),
    "X2": (0, INCREASING),
    "X3": (360, INCREASING),
    "X4": (360, DECREASING),
    "X5": (180, INCREASING),
    "X6": (180, DECREASING),
}
SERIES_IDS = tuple(SERIES_LAYOUT)
COLUMNS = {sid: f"{sid}_{deg}" for sid, (deg, _) in SERIES_LAYOUT.items()}
FORCE_COLUMN = "force_kgf"
HEADER = (FORCE_COLUMN,) + tuple(COLUMNS.values())
METADATA_KEYS = ("zero_indication", "temp_start_C", "temp_end_C", "resolution_V", "force_unit")
# decreasing legs continue the increasing leg of the same mounting
PAIRS = (("X3", "X4"), ("X5", "X6"))


@dataclass(frozen=True)
class LoadSchedule:
    f_max: float
    steps: tuple
    preloads: int = 3
    hold: float = 60.0
    gap: float = 180.0
    series_plan: tuple = SERIES_PLAN

    def __post_init__(self):
        steps = tuple(float(s) for s in self.steps)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "series_plan", tuple(tuple(s) for s in self.series_plan))
        if len(steps) < MIN_LEVELS:
            raise ScheduleError(
                f"calibration needs at least {MIN_LEVELS} nonzero force levels, got {len(steps)}"
            )
        if steps[0] <= 0:
            raise ScheduleError("first force level must be > 0")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ScheduleError("force levels must be strictly increasing")
        if steps[-1] != self.f_max:
            raise ScheduleError(f"last force level {steps[-1]!r} must equal f_max {self.f_max!r}")
        if self.series_plan != SERIES_PLAN:
            raise ScheduleError(f"series plan must be {SERIES_PLAN}, got {self.series_plan}")
        if self.preloads < 0 or self.hold <= 0 or self.gap < 0:
            raise ScheduleError("preloads must be >= 0, hold > 0 and gap >= 0")


def build_schedule(f_max, n_steps=MIN_LEVELS):
    """Uniform schedule f_max*k/n_steps for k = 1..n_steps (kgf)."""
    if not f_max > 0:
        raise ScheduleError(f"f_max must be > 0, got {f_max!r}")
    if int(n_steps) != n_steps or n_steps < MIN_LEVELS:
        raise ScheduleError(
            f"calibration needs at least {MIN_LEVELS} uniformly distributed force levels, got {n_steps}"
        )
    n = int(n_steps)
    return LoadSchedule(float(f_max), tuple(f_max * k / n for k in range(1, n + 1)))


@dataclass(frozen=True)
class Series:
    series_id: str
    orientation_deg: int
    direction: str
    readings: tuple
    zero_start: float  # force-0 reading in the leading row
    zero_end: float | None = None  # force-0 reading in the trailing row, when taken

    def __post_init__(self):
        object.__setattr__(self, "readings", tuple(float(r) for r in self.readings))


@dataclass(frozen=True)
class CalibrationDataset:
    force_levels: tuple
    series: dict
    zero_indication: float | None = None
    temp_start_C: float | None = None
    temp_end_C: float | None = None
    resolution_V: float | None = None

    def __post_init__(self):
        levels = tuple(float(f) for f in self.force_levels)
        object.__setattr__(self, "force_levels", levels)
        if len(levels) < MIN_LEVELS:
            raise ParseError(f"fewer than {MIN_LEVELS} force levels ({len(levels)})")
        if levels[0] <= 0 or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ParseError("non-monotonic force levels")
        missing = [sid for sid in SERIES_IDS if sid not in self.series]
        if missing:
            raise ParseError("missing series " + ", ".join(COLUMNS[s] for s in missing))
        for sid, (deg, direction) in SERIES_LAYOUT.items():
            s = self.series[sid]
            if (s.series_id, s.orientation_deg, s.direction) != (sid, deg, direction):
                raise ParseError(f"series {sid} must be {direction} at {deg} deg")
            if len(s.readings) != len(levels):
                raise ParseError(f"series {sid} has {len(s.readings)} readings for {len(levels)} force levels")
        object.__setattr__(self, "series", {sid: self.series[sid] for sid in SERIES_IDS})

    def __getitem__(self, sid):
        return self.series[sid]

    @property
    def f_max(self):
        return self.force_levels[-1]

    def readings(self, sid):
        return np.asarray(self.series[sid].readings)


def deflections(ds: CalibrationDataset, mode="zero_referenced"):
    """Per-series deflection arrays aligned with ``ds.force_levels``.

    ``raw`` returns the indications unchanged; ``zero_referenced`` subtracts
    each series' own force-0 reading.
    """
    if mode in ("zero", "zero_referenced"):
        return {sid: ds.readings(sid) - ds[sid].zero_start for sid in SERIES_IDS}
    if mode == "raw":
        return {sid: ds.readings(sid) for sid in SERIES_IDS}
    raise ValueError(f"unknown deflection mode {mode!r}; expected 'raw' or 'zero_referenced'")


# --------------------------------------------------------------------------
# CSV format


def _fmt(value):
    return "" if value is None else repr(float(value))


def serialize_dataset(ds: CalibrationDataset) -> str:
    lines = []
    for key in METADATA_KEYS[:-1]:
        value = getattr(ds, key)
        if value is not None:
            lines.append(f"# {key}={_fmt(value)}")
    lines.append("# force_unit=kgf")
    lines.append(",".join(HEADER))
    lines.append(",".join(["0.0"] + [_fmt(ds[sid].zero_start) for sid in SERIES_IDS]))
    for i, force in enumerate(ds.force_levels):
        lines.append(",".join([_fmt(force)] + [_fmt(ds[sid].readings[i]) for sid in SERIES_IDS]))
    lines.append(",".join(["0.0"] + [_fmt(ds[sid].zero_end) for sid in SERIES_IDS]))
    return "\n".join(lines) + "\n"


def _number(cell, line, col, name):
    text = cell.strip()
    if text == "":
        raise ParseError(f"empty cell in column {name}", line, col)
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric cell {text!r} in column {name}", line, col) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite cell {text!r} in column {name}", line, col)
    return value


def parse_dataset(text: str) -> CalibrationDataset:
    meta = {}
    header = None
    rows = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw[:-1] if raw.endswith("\r") else raw
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            if header is not None:
                raise ParseError("metadata line after header", lineno, 1)
            key, sep, value = line.lstrip()[1:].strip().partition("=")
            key = key.strip()
            if not sep or key not in METADATA_KEYS:
                raise ParseError(f"unknown metadata line {line!r}", lineno, 1)
            if key == "force_unit":
                if value.strip() != "kgf":
                    raise ParseError(f"force_unit must be kgf, got {value.strip()!r}", lineno, 1)
            else:
                meta[key] = _number(value, lineno, 1, key)
            continue
        cells = line.split(",")
        if header is None:
            names = [c.strip() for c in cells]
            if FORCE_COLUMN not in names:
                raise ParseError(f"missing header (expected {','.join(HEADER)})", lineno, 1)
            for name in HEADER:
                if name not in names:
                    raise ParseError(f"missing column {name}", lineno)
            extra = [n for n in names if n not in HEADER]
            if extra or len(names) != len(HEADER):
                raise ParseError(f"unexpected columns {extra or names}", lineno)
            header = names
            continue
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(cells)}", lineno)
        rows.append((lineno, dict(zip(header, cells)), {n: i + 1 for i, n in enumerate(header)}))

    if header is None:
        raise ParseError("missing header", 1)
    if len(rows) < 2:
        raise ParseError("missing zero rows", rows[0][0] if rows else None)

    def cell(row, name, required=True):
        lineno, values, cols = row
        if not required and values[name].strip() == "":
            return None
        return _number(values[name], lineno, cols[name], name)

    first, last, body = rows[0], rows[-1], rows[1:-1]
    if cell(first, FORCE_COLUMN) != 0.0:
        raise ParseError("missing leading zero row (first data row must be at force 0)", first[0], 1)
    if cell(last, FORCE_COLUMN) != 0.0:
        raise ParseError("missing trailing zero row (last data row must be at force 0)", last[0], 1)

    levels = []
    for row in body:
        force = cell(row, FORCE_COLUMN)
        if force <= 0 or (levels and force <= levels[-1]):
            raise ParseError("non-monotonic force levels", row[0], 1)
        levels.append(force)
    if len(levels) < MIN_LEVELS:
        raise ParseError(f"fewer than {MIN_LEVELS} force levels ({len(levels)})", last[0])

    series = {}
    for sid, (deg, direction) in SERIES_LAYOUT.items():
        name = COLUMNS[sid]
        series[sid] = Series(
            sid,
            deg,
            direction,
            tuple(cell(row, name) for row in body),
            zero_start=cell(first, name),
            zero_end=cell(last, name, required=False),
        )
    return CalibrationDataset(
        tuple(levels),
        series,
        zero_indication=meta.get("zero_indication"),
        temp_start_C=meta.get("temp_start_C"),
        temp_end_C=meta.get("temp_end_C"),
        resolution_V=meta.get("resolution_V"),
    )


# --------------------------------------------------------------------------
# synthetic calibration


@dataclass(frozen=True)
class SettleSettings:
    """How each quasi-static force level is applied to the simulated sensor."""

    ramp_time: float = 0.5  # s to move linearly between consecutive levels
    settle_time: float = 0.01  # s with |v| < v_stick before a reading
    dp_tol: float = 0.0  # Pa/s; 0 waits until the pressure stops changing at all
    max_hold: float = 60.0  # s


@dataclass
class _Runner:
    geom: SensorGeometry
    gas: GasProperties
    piston: PistonParams
    cfg: SimulationConfig
    transducer: TransducerParams
    settle: SettleSettings
    g: float
    series_id: str = ""

    def read(self, state):
        return transducer_voltage(state.p - self.gas.p_atm, self.transducer).volts

    def move(self, state, piston, f_from_kgf, f_to_kgf):
        s = self.settle
        try:
            return settle_under_load(
                state,
                kgf_to_newton(f_from_kgf, self.g),
                kgf_to_newton(f_to_kgf, self.g),
                self.geom,
                self.gas,
                piston,
                self.cfg,
                ramp_time=s.ramp_time,
                settle_time=s.settle_time,
                dp_tol=s.dp_tol,
                max_time=s.max_hold,
            )
        except (NumericInstabilityError, TimeoutError) as exc:
            raise CalibrationError(
                f"series {self.series_id or 'preload'} at {f_to_kgf} kgf: {exc}",
                series=self.series_id or None,
                force_kgf=f_to_kgf,
            ) from exc


def run_synthetic_calibration(
    schedule: LoadSchedule,
    geom: SensorGeometry | None = None,
    gas: GasProperties | None = None,
    piston: PistonParams | None = None,
    cfg: SimulationConfig | None = None,
    transducer: TransducerParams | None = None,
    noise_sigma=0.0,
    seed=None,
    settle: SettleSettings | None = None,
) -> CalibrationDataset:
    """Run the simulated sensor through ``schedule`` and record its indications.

    Each mounting (X1, X2, X3+X4, X5+X6) starts from the rest state left by
    the preloads, so the runs are independent of each other. The 180 deg
    mounting flips the sign of the gravity term. Optional additive Gaussian
    noise of ``noise_sigma`` volts is drawn from ``numpy.random.default_rng(seed)``.
    """
    geom = geom or make_geometry()
    gas = gas or GasProperties()
    piston = piston or PistonParams()
    cfg = (cfg or SimulationConfig()).check(geom)
    transducer = transducer or TransducerParams()
    settle = settle or SettleSettings()
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    run = _Runner(geom, gas, piston, cfg, transducer, settle, piston.g)

    state = SensorState(cfg.x0, 0.0, cfg.p0).check(geom)
    zero_indication = run.read(state)
    for _ in range(schedule.preloads):
        state = run.move(state, piston, 0.0, schedule.f_max)
        state = run.move(state, piston, schedule.f_max, 0.0)
    rest = state

    levels = schedule.steps
    series = {}
    next_id = iter(SERIES_IDS)
    for deg, direction in schedule.series_plan:
        sid = next(next_id)
        run.series_id = sid
        mounted = piston if deg in (0, 360) else replace(piston, alpha=-piston.alpha)
        state = rest
        zero_start = run.read(state)
        up = []
        prev = 0.0
        for level in levels:
            state = run.move(state, mounted, prev, level)
            up.append(run.read(state))
            prev = level
        if direction == INCREASING:
            state = run.move(state, mounted, prev, 0.0)
            series[sid] = Series(sid, deg, INCREASING, up, zero_start, run.read(state))
            continue
        series[sid] = Series(sid, deg, INCREASING, up, zero_start)
        sid = next(next_id)
        run.series_id = sid
        down = [None] * len(levels)
        down[-1] = run.read(state)
        for i in range(len(levels) - 2, -1, -1):
            state = run.move(state, mounted, prev, levels[i])
            down[i] = run.read(state)
            prev = levels[i]
        state = run.move(state, mounted, prev, 0.0)
        series[sid] = Series(sid, deg, DECREASING, down, run.read(state))

    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        zero_indication += float(rng.normal(0.0, noise_sigma))
        for sid in SERIES_IDS:
            s = series[sid]
            noisy = s.readings + rng.normal(0.0, noise_sigma, len(s.readings))
            z0 = s.zero_start + float(rng.normal(0.0, noise_sigma))
            z1 = None if s.zero_end is None else s.zero_end + float(rng.normal(0.0, noise_sigma))
            series[sid] = replace(s, readings=tuple(float(r) for r in noisy), zero_start=z0, zero_end=z1)

    temp = gas.T0 - 273.15
    return CalibrationDataset(
        tuple(levels), series, zero_indication=zero_indication, temp_start_C=temp, temp_end_C=temp
    )
