"""Calibration error metrics, uncertainty budget and instrument classification.

Readings are indicator values in volts. Relative errors are returned in percent,
uncertainty components as plain relative numbers.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .calibration import PAIRS, CalibrationDataset, deflections
from .errors import BudgetError, ClassificationError, DegenerateScaleError, DomainError, FitError

CASE_A = "A_interpolation"
CASE_B = "B_specific_forces"

# class -> (b, b_prime, |f0|, v, U_max) in percent; |f_c| shares the f0 limit
CLASS_LIMITS = {
    0: (0.05, 0.03, 0.025, 0.07, 0.06),
    0.5: (0.1, 0.05, 0.05, 0.15, 0.12),
    1: (0.2, 0.1, 0.1, 0.3, 0.24),
    2: (0.4, 0.2, 0.2, 0.5, 0.45),
}
CLASSES = tuple(CLASS_LIMITS)

SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)


def _nonzero(value, what):
    if value == 0:
        raise DegenerateScaleError(f"{what} is zero; relative error undefined")
    return value


# --------------------------------------------------------------------------
# error metrics


def zero_error_f0(i0, i_f, x_n):
    """Signed zero error in percent of the full-scale reading ``x_n``."""
    return (i_f - i0) / _nonzero(x_n, "X_N") * 100.0


def repeatability_b_prime(x1, x2):
    mean = _nonzero((x1 + x2) / 2.0, "mean of X1 and X2")
    return abs(x2 - x1) / mean * 100.0


def reproducibility_b(x1, x3, x5):
    """Returns ``(b, x_bar_r)`` over the three rotated mountings."""
    x_bar_r = (x1 + x3 + x5) / 3.0
    _nonzero(x_bar_r, "mean rotated deflection")
    return (max(x1, x3, x5) - min(x1, x3, x5)) / x_bar_r * 100.0, x_bar_r


def reversibility_v(x3, x4, x5, x6):
    # each leg is divided by its own increasing-leg reading, halves summed
    return (
        abs(x4 - x3) / _nonzero(x3, "X3") * 50.0
        + abs(x6 - x5) / _nonzero(x5, "X5") * 50.0
    )


def creep_c(i30, i300, x_n):
    return abs(i300 - i30) / _nonzero(x_n, "X_N") * 100.0


@dataclass(frozen=True)
class FitResult:
    degree: int
    coefficients: tuple  # ascending powers of force, intercept first
    x_a: tuple
    f_c: tuple  # percent


def _vandermonde(forces, degree):
    return np.vander(np.asarray(forces, dtype=float), degree + 1, increasing=True)


def polyval(coefficients, force):
    return np.polynomial.polynomial.polyval(force, coefficients)


def interpolation_fit(forces, x_bar_r, degree=1) -> FitResult:
    """Least-squares polynomial X_a(F) with a free intercept and its errors f_c.

    f_c = (X_r - X_a)/X_a*100 at every level.
    """
    if degree not in (1, 2, 3):
        raise DomainError(f"fit degree must be 1, 2 or 3, got {degree!r}")
    forces = np.asarray(forces, dtype=float)
    y = np.asarray(x_bar_r, dtype=float)
    if forces.shape != y.shape or forces.ndim != 1:
        raise DomainError("forces and readings must be 1-D sequences of equal length")
    if len(forces) <= degree:
        raise FitError(f"degree {degree} fit needs more than {degree} points, got {len(forces)}")
    a = _vandermonde(forces, degree)
    coef, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
    if rank < degree + 1:
        raise FitError(f"rank-deficient fit: rank {rank} for {degree + 1} coefficients")
    x_a = a @ coef
    if np.any(x_a == 0):
        raise DegenerateScaleError("fitted value X_a is zero; f_c undefined")
    f_c = (y - x_a) / x_a * 100.0
    return FitResult(degree, tuple(coef.tolist()), tuple(x_a.tolist()), tuple(f_c.tolist()))


def sensitivity(forces, deflections):
    """Least-squares slope of deflection against force (V per kgf)."""
    forces = np.asarray(forces, dtype=float)
    y = np.asarray(deflections, dtype=float)
    if len(forces) < 2 or forces.shape != y.shape:
        raise DomainError("sensitivity needs at least 2 (force, deflection) points")
    fc = forces - forces.mean()
    denom = float(fc @ fc)
    if denom == 0:
        raise DomainError("sensitivity needs at least two distinct forces")
    return float(fc @ (y - y.mean())) / denom


# --------------------------------------------------------------------------
# uncertainty


@dataclass(frozen=True)
class BudgetInputs:
    machine_error_rel: float = 0.0005
    k_machine: float = 2.0
    resolution_r: float = 1e-6  # V
    K_temp: float = 0.00027  # 1/degC
    delta_T: float | None = None  # degC over the calibration
    creep_available: bool = False
    c: float | None = None  # creep in percent, when measured
    k: float = 2.0  # coverage factor for U

    def __post_init__(self):
        if not self.k_machine > 0 or not self.k > 0:
            raise DomainError("coverage factors must be > 0")
        if self.machine_error_rel < 0 or self.resolution_r < 0 or self.K_temp < 0:
            raise DomainError("machine error, resolution and K must be >= 0")
        if self.creep_available and self.c is None:
            raise BudgetError(["c"])


def uncertainty_components(
    inputs: BudgetInputs,
    x1=None,
    x3=None,
    x5=None,
    b_prime=None,
    v=None,
    f0_max_abs=None,
    x_a=None,
):
    """The eight relative components w1..w8 for one force level.

    ``x_a`` is the interpolated reading; without it w8 is 0.
    """
    required = {"x1": x1, "x3": x3, "x5": x5, "b_prime": b_prime, "f0_max_abs": f0_max_abs}
    if not inputs.creep_available:
        required["v"] = v
    required["delta_T"] = inputs.delta_T
    missing = [name for name, value in required.items() if value is None]
    if missing:
        raise BudgetError(missing)
    x_bar_r = (x1 + x3 + x5) / 3.0
    scale = abs(_nonzero(x_bar_r, "mean rotated deflection"))
    w1 = inputs.machine_error_rel / inputs.k_machine
    w2 = math.sqrt(sum((xi - x_bar_r) ** 2 for xi in (x1, x3, x5)) / 6.0) / scale
    w3 = b_prime / (100.0 * SQRT3)
    w4 = inputs.resolution_r / (SQRT6 * scale)
    if inputs.creep_available:
        w5 = inputs.c / (100.0 * SQRT3)
    else:
        w5 = (v / 100.0) / 3.0
    w6 = abs(f0_max_abs) / 100.0
    w7 = inputs.K_temp * abs(inputs.delta_T) / 2.0 / SQRT3
    w8 = 0.0 if x_a is None else abs(x_bar_r - x_a) / scale
    return (w1, w2, w3, w4, w5, w6, w7, w8)


def combine_wc(components):
    if len(components) != 8:
        raise DomainError(f"expected 8 components, got {len(components)}")
    return math.sqrt(math.fsum(w * w for w in components))


@dataclass(frozen=True)
class UncertaintyFit:
    degree: int
    coefficients: tuple  # ascending powers of force, already raised by ``floor``
    floor: float  # upward shift so the curve is never below a measured U
    fitted: tuple


def expanded_uncertainty(forces, wc, k=2.0, fit_degree=1):
    """U = k*wc per level plus a least-squares U(F) lifted to cover every measured U."""
    if not k > 0:
        raise DomainError(f"k must be > 0, got {k!r}")
    if fit_degree not in (0, 1, 2):
        raise DomainError(f"U fit degree must be 0, 1 or 2, got {fit_degree!r}")
    forces = np.asarray(forces, dtype=float)
    u = k * np.asarray(wc, dtype=float)
    if len(u) < max(2, fit_degree + 1):
        raise FitError(f"U fit of degree {fit_degree} needs at least {max(2, fit_degree + 1)} levels")
    a = _vandermonde(forces, fit_degree)
    coef, _, rank, _ = np.linalg.lstsq(a, u, rcond=None)
    if rank < fit_degree + 1:
        raise FitError("rank-deficient U fit")
    fitted = a @ coef
    floor = max(0.0, float(np.max(u - fitted)))
    coef = coef.copy()
    coef[0] += floor
    fitted = fitted + floor
    return tuple(u.tolist()), UncertaintyFit(fit_degree, tuple(coef.tolist()), floor, tuple(fitted.tolist()))


@dataclass(frozen=True)
class BudgetRow:
    force_kgf: float
    w: tuple  # w1..w8
    wc: float
    U: float  # k*wc, relative


@dataclass(frozen=True)
class UncertaintyBudget:
    inputs: BudgetInputs
    rows: tuple
    fit: UncertaintyFit

    def __post_init__(self):
        for row in self.rows:
            if any(not w >= 0 for w in row.w):
                raise DomainError(f"negative uncertainty component at {row.force_kgf} kgf")


# --------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class LevelErrors:
    force_kgf: float
    x_bar_r: float
    b: float
    b_prime: float
    v: float
    f_c: float | None = None
    x_bar_r_first: float | None = None  # X1 minus its own zero, the alternative convention


@dataclass(frozen=True)
class ErrorReport:
    mode: str
    levels: tuple
    f0: dict  # "X1", "X2", "X3-X4", "X5-X6" -> signed percent
    x_n: dict  # full-scale reading used for each f0 entry
    f0_alternative: dict = field(default_factory=dict)
    c: float | None = None
    fit: FitResult | None = None
    notes: tuple = ()

    def __post_init__(self):
        for lv in self.levels:
            values = [lv.x_bar_r, lv.b, lv.b_prime, lv.v] + ([] if lv.f_c is None else [lv.f_c])
            if not all(math.isfinite(x) for x in values):
                raise DomainError(f"non-finite error metric at {lv.force_kgf} kgf")
            if lv.b < 0 or lv.b_prime < 0 or lv.v < 0:
                raise DomainError(f"negative spread metric at {lv.force_kgf} kgf")

    @property
    def forces(self):
        return tuple(lv.force_kgf for lv in self.levels)

    @property
    def f0_max_abs(self):
        return max(abs(f) for f in self.f0.values())


def _spread(metric, *args):
    """Metric at a level whose readings all coincide is 0 even when the scale is 0."""
    if all(a == args[0] for a in args):
        return 0.0
    return metric(*args)


def error_report(ds: CalibrationDataset, mode="raw", degree=None, c=None) -> ErrorReport:
    d = deflections(ds, mode)
    notes = []
    levels = []
    for i, force in enumerate(ds.force_levels):
        x1, x2, x3, x4, x5, x6 = (float(d[s][i]) for s in ("X1", "X2", "X3", "X4", "X5", "X6"))
        x_bar_r = (x1 + x3 + x5) / 3.0
        b = _spread(lambda *x: reproducibility_b(*x)[0], x1, x3, x5)
        b_prime = _spread(repeatability_b_prime, x1, x2)
        v = 0.0 if (x3 == x4 and x5 == x6) else reversibility_v(x3, x4, x5, x6)
        first = float(ds.readings("X1")[i] - ds["X1"].zero_start)
        levels.append(LevelErrors(float(force), x_bar_r, b, b_prime, v, None, first))

    # f0 per series; X_N is the top reading of the increasing leg, in the same mode
    top = {sid: float(d[sid][-1]) for sid in d}
    f0, x_n, alt = {}, {}, {}
    for sid in ("X1", "X2"):
        if ds[sid].zero_end is not None:
            f0[sid] = zero_error_f0(ds[sid].zero_start, ds[sid].zero_end, top[sid])
            x_n[sid] = top[sid]
    for up, down in PAIRS:
        key = f"{up}-{down}"
        i0, i_f = ds[up].zero_start, ds[down].zero_start
        f0[key] = zero_error_f0(i0, i_f, top[up])
        x_n[key] = top[up]
        alt[key] = {"x_n": top[down], "f0": zero_error_f0(i0, i_f, top[down])}
    if not f0:
        raise ClassificationError("no zero-error pair available in the dataset")
    notes.append(
        "f0 of a rotated pair uses the increasing-leg top reading as X_N; "
        "f0_alternative gives the value with the decreasing-leg top reading"
    )
    notes.append(
        "x_bar_r is the mean of X1, X3, X5; x_bar_r_first is X1 minus its own zero, "
        "reported for comparison"
    )

    fit = None
    if degree is not None:
        fit = interpolation_fit(ds.force_levels, [lv.x_bar_r for lv in levels], degree)
        levels = [
            LevelErrors(lv.force_kgf, lv.x_bar_r, lv.b, lv.b_prime, lv.v, fc, lv.x_bar_r_first)
            for lv, fc in zip(levels, fit.f_c)
        ]
    return ErrorReport(mode, tuple(levels), f0, x_n, alt, c, fit, tuple(notes))


def uncertainty_budget(ds: CalibrationDataset, report: ErrorReport, inputs: BudgetInputs, u_fit_degree=1):
    d = deflections(ds, report.mode)
    rows = []
    for i, lv in enumerate(report.levels):
        x_a = None if report.fit is None else report.fit.x_a[i]
        w = uncertainty_components(
            inputs,
            x1=float(d["X1"][i]),
            x3=float(d["X3"][i]),
            x5=float(d["X5"][i]),
            b_prime=lv.b_prime,
            v=lv.v,
            f0_max_abs=report.f0_max_abs,
            x_a=x_a,
        )
        wc = combine_wc(w)
        rows.append(BudgetRow(lv.force_kgf, w, wc, inputs.k * wc))
    _, fit = expanded_uncertainty(report.forces, [r.wc for r in rows], inputs.k, u_fit_degree)
    return UncertaintyBudget(inputs, tuple(rows), fit)


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class ClassResult:
    cls: float
    f0_pass: bool
    classified_range: tuple | None  # (f_min, f_max) kgf
    covers_half: bool
    level_checks: tuple  # per level, ascending: dict criterion -> bool


@dataclass(frozen=True)
class ClassificationResult:
    case: str
    assigned_class: float | None
    classified_range: tuple | None
    nominal_max: float
    classes: tuple

    def __post_init__(self):
        if self.assigned_class is not None:
            lo, hi = self.classified_range
            if not (lo <= 0.5 * self.nominal_max and hi >= self.nominal_max):
                raise ClassificationError("assigned class does not cover 50-100 % of nominal range")


def _level_checks(lv: LevelErrors, limits, case, u_percent):
    b, bp, f0, v, u_max = limits
    checks = {"b": lv.b <= b, "b_prime": lv.b_prime <= bp, "v": lv.v <= v}
    if case == CASE_A:
        checks["f_c"] = lv.f_c is not None and abs(lv.f_c) <= f0
        checks["U"] = u_percent is not None and u_percent <= u_max
    return checks


def classify(report: ErrorReport, budget: UncertaintyBudget | None = None, case=CASE_B, nominal_max=None):
    if case not in (CASE_A, CASE_B):
        raise ClassificationError(f"unknown case {case!r}")
    if not report.levels:
        raise ClassificationError("empty error report")
    forces = report.forces
    if any(b <= a for a, b in zip(forces, forces[1:])):
        raise ClassificationError("report force levels must be strictly ascending")
    if nominal_max is None:
        nominal_max = forces[-1]
    if forces[-1] != nominal_max:
        raise ClassificationError(f"report stops at {forces[-1]} kgf, nominal range is {nominal_max} kgf")
    if case == CASE_A:
        if budget is None:
            raise ClassificationError("case A needs an uncertainty budget")
        if report.fit is None:
            raise ClassificationError("case A needs an interpolation fit")
        u_percent = [100.0 * r.U for r in budget.rows]
    else:
        u_percent = [None] * len(forces)

    results = []
    assigned = None
    for cls in CLASSES:
        limits = CLASS_LIMITS[cls]
        f0_pass = report.f0_max_abs <= limits[2]
        checks = tuple(_level_checks(lv, limits, case, u) for lv, u in zip(report.levels, u_percent))
        lo = None
        if f0_pass:
            for i in range(len(forces) - 1, -1, -1):
                if not all(checks[i].values()):
                    break
                lo = forces[i]
        rng = None if lo is None else (lo, forces[-1])
        covers = rng is not None and lo <= 0.5 * nominal_max
        results.append(ClassResult(cls, f0_pass, rng, covers, checks))
        if covers and assigned is None:
            assigned = (cls, rng)
    return ClassificationResult(
        case,
        None if assigned is None else assigned[0],
        None if assigned is None else assigned[1],
        float(nominal_max),
        tuple(results),
    )


# --------------------------------------------------------------------------
# full analysis and export


@dataclass(frozen=True)
class Analysis:
    report: ErrorReport
    budget: UncertaintyBudget | None
    classification: ClassificationResult
    notes: tuple = ()


def _delta_t(ds):
    if ds.temp_start_C is None or ds.temp_end_C is None:
        return None
    return abs(ds.temp_end_C - ds.temp_start_C)


def analyze(
    ds: CalibrationDataset,
    mode="raw",
    case=CASE_B,
    degree=1,
    inputs: BudgetInputs | None = None,
    u_fit_degree=1,
):
    """Error report, uncertainty budget and classification of one dataset.

    In case B the budget is informational: when the temperature record is
    missing or a level has zero mean deflection it is skipped with a note.
    Case A raises instead.
    """
    if inputs is None:
        inputs = BudgetInputs()
    if inputs.delta_T is None:
        dt = _delta_t(ds)
        if dt is not None:
            inputs = replace(inputs, delta_T=dt)
    if ds.resolution_V is not None and inputs.resolution_r == BudgetInputs.resolution_r:
        inputs = replace(inputs, resolution_r=ds.resolution_V)
    report = error_report(ds, mode, degree if case == CASE_A else None, inputs.c)
    notes = []
    budget = None
    try:
        budget = uncertainty_budget(ds, report, inputs, u_fit_degree)
    except (BudgetError, DegenerateScaleError) as exc:
        if case == CASE_A:
            raise
        notes.append(f"uncertainty budget skipped: {exc}")
    return Analysis(report, budget, classify(report, budget, case), tuple(notes))


def _json(value, indent=0):
    pad = "  " * (indent + 1)
    end = "  " * indent
    if value is None or value is True or value is False:
        return {None: "null", True: "true", False: "false"}[value]
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g") if math.isfinite(value) else "null"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{_json(str(k))}: {_json(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        return "[\n" + ",\n".join(pad + _json(v, indent + 1) for v in value) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _class_label(cls):
    return "none" if cls is None else (int(cls) if float(cls).is_integer() else float(cls))


def analysis_dict(a: Analysis):
    r = a.report
    report = {
        "mode": r.mode,
        "levels": [
            {
                "force_kgf": lv.force_kgf,
                "x_bar_r": lv.x_bar_r,
                "x_bar_r_first": lv.x_bar_r_first,
                "b": lv.b,
                "b_prime": lv.b_prime,
                "v": lv.v,
                "f_c": lv.f_c,
            }
            for lv in r.levels
        ],
        "f0": dict(r.f0),
        "x_n": dict(r.x_n),
        "f0_alternative": {k: dict(v) for k, v in r.f0_alternative.items()},
        "c": r.c,
        "fit": None
        if r.fit is None
        else {"degree": r.fit.degree, "coefficients": list(r.fit.coefficients), "x_a": list(r.fit.x_a)},
        "notes": list(r.notes),
    }
    budget = None
    if a.budget is not None:
        b = a.budget
        budget = {
            "inputs": asdict(b.inputs),
            "rows": [
                {"force_kgf": row.force_kgf, **{f"w{i + 1}": w for i, w in enumerate(row.w)}, "wc": row.wc, "U": row.U}
                for row in b.rows
            ],
            "U_fit": {
                "degree": b.fit.degree,
                "coefficients": list(b.fit.coefficients),
                "floor": b.fit.floor,
                "fitted": list(b.fit.fitted),
            },
        }
    c = a.classification
    classification = {
        "case": c.case,
        "assigned_class": _class_label(c.assigned_class),
        "classified_range": None if c.classified_range is None else list(c.classified_range),
        "nominal_max": c.nominal_max,
        "classes": [
            {
                "class": _class_label(cr.cls),
                "f0_pass": cr.f0_pass,
                "classified_range": None if cr.classified_range is None else list(cr.classified_range),
                "covers_half": cr.covers_half,
                "levels": [
                    {"force_kgf": f, **checks} for f, checks in zip(r.forces, cr.level_checks)
                ],
            }
            for cr in c.classes
        ],
    }
    return {"error_report": report, "uncertainty_budget": budget, "classification": classification, "notes": list(a.notes)}


def to_json(a: Analysis) -> str:
    return _json(analysis_dict(a)) + "\n"


CSV_HEADER = ("force_kgf", "x_bar_r", "b", "b_prime", "v", "f_c") + tuple(f"w{i}" for i in range(1, 9)) + ("wc", "U")


def to_csv(a: Analysis) -> str:
    def cell(x):
        return "" if x is None or not math.isfinite(x) else format(x, ".17g")

    lines = [",".join(CSV_HEADER)]
    rows = {} if a.budget is None else {row.force_kgf: row for row in a.budget.rows}
    for lv in a.report.levels:
        row = rows.get(lv.force_kgf)
        w = (None,) * 8 if row is None else row.w
        tail = (None, None) if row is None else (row.wc, row.U)
        values = (lv.force_kgf, lv.x_bar_r, lv.b, lv.b_prime, lv.v, lv.f_c) + tuple(w) + tail
        lines.append(",".join(cell(x) for x in values))
    return "\n".join(lines) + "\n"
