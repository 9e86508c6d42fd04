"""Command-line front end: ``pneuforce {simulate,dimension,synth,analyze}``.

Configuration comes from built-in defaults, then an optional ``key=value``
file (``--config``), then ``--set key=value`` and the dedicated flags.

Exit codes: 0 success, 1 configuration or parse error, 2 numerical failure,
3 analysis inputs incomplete.
"""
from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from dataclasses import dataclass, fields

from .calibration import SettleSettings, build_schedule, parse_dataset, run_synthetic_calibration, serialize_dataset
from .core_model import GasProperties, PistonParams, TransducerParams, make_geometry
from .dimensioning import solve_diameter, solve_force, solve_pressure
from .dynamics import ForceProfile, SimulationConfig, simulate
from .errors import (
    BudgetError,
    CalibrationError,
    ClassificationError,
    ConfigError,
    DegenerateScaleError,
    FitError,
    NumericInstabilityError,
    PneuforceError,
)
from .metrology import CASE_A, CASE_B, BudgetInputs, analyze, to_csv, to_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INCOMPLETE = 0, 1, 2, 3


@dataclass
class RunConfig:
    # geometry, m
    d_piston: float = 10e-3
    stroke_max: float = 4e-3
    d_dead: float = 4e-3
    l_dead: float = 3e-3
    # gas
    gamma: float = 1.4
    R: float = 287.0
    T0: float = 293.15
    p_atm: float = 1.013e5
    # piston
    mass: float = 8e-3
    f_viscous: float = 190.0
    f_coulomb: float = 10.0
    alpha: float = 0.0
    # integration
    dt: float = 1e-5
    t_end: float = 5.0
    qm: float = 0.0
    v_stick: float = 1e-4
    p0: float = 2.37e5
    x0: float = 4e-3
    input_filter_tau: float = 0.05
    decimation: int = 1
    force: str = "step:39.24@1.0"
    # transducer
    v_offset: float = 0.2
    sensitivity: float = 9e-6
    p_max: float = 5e5
    v_full_scale: float = 4.7
    # calibration schedule, kgf
    f_max_kgf: float = 4.0
    n_steps: int = 8
    preloads: int = 3
    seed: int | None = 0
    noise: float = 0.0
    ramp_time: float = 0.5
    settle_time: float = 0.01
    dp_tol: float = 0.0
    max_hold: float = 60.0
    # metrology
    mode: str = "raw"
    case: str = "B"
    degree: int = 1
    machine_error_rel: float = 0.0005
    k_machine: float = 2.0
    resolution_r: float = 1e-6
    K_temp: float = 0.00027
    delta_T: float | None = None
    creep: float | None = None  # percent, when measured
    k: float = 2.0
    u_fit_degree: int = 1

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    def update(self, mapping, source):
        types = {f.name: f.type for f in fields(self)}
        for key, text in mapping.items():
            if key not in types:
                raise ConfigError(f"{source}: unknown configuration key {key!r}")
            setattr(self, key, _convert(key, text, types[key], source))
        return self

    def geometry(self):
        return make_geometry(self.d_piston, self.stroke_max, self.d_dead, self.l_dead)

    def gas(self):
        return GasProperties(self.gamma, self.R, self.T0, self.p_atm)

    def piston(self):
        return PistonParams(self.mass, self.f_viscous, self.f_coulomb, self.alpha)

    def simulation(self):
        return SimulationConfig(
            self.dt, self.t_end, self.qm, self.v_stick, self.p0, self.x0, self.input_filter_tau, self.decimation
        ).check(self.geometry())

    def transducer(self):
        return TransducerParams(self.v_offset, self.sensitivity, self.p_max, self.v_full_scale)

    def schedule(self):
        return dataclasses.replace(build_schedule(self.f_max_kgf, self.n_steps), preloads=self.preloads)

    def settle(self):
        return SettleSettings(self.ramp_time, self.settle_time, self.dp_tol, self.max_hold)

    def budget_inputs(self):
        return BudgetInputs(
            machine_error_rel=self.machine_error_rel,
            k_machine=self.k_machine,
            resolution_r=self.resolution_r,
            K_temp=self.K_temp,
            delta_T=self.delta_T,
            creep_available=self.creep is not None,
            c=self.creep,
            k=self.k,
        )

    def validate(self):
        """Build every model object once so bad values fail before any computation."""
        self.geometry()
        self.gas()
        self.piston()
        self.simulation()
        self.transducer()
        self.schedule()
        self.settle()
        self.budget_inputs()
        ForceProfile.parse(self.force)
        if self.mode not in ("raw", "zero"):
            raise ConfigError(f"mode must be 'raw' or 'zero', got {self.mode!r}")
        if self.case not in ("A", "B"):
            raise ConfigError(f"case must be 'A' or 'B', got {self.case!r}")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        return self


def _convert(key, text, type_name, source):
    text = str(text).strip()
    optional = "None" in str(type_name)
    if optional and text.lower() in ("", "none"):
        return None
    try:
        if str(type_name).startswith("int"):
            value = float(text)
            if not value.is_integer():
                raise ValueError(text)
            return int(value)
        if str(type_name).startswith("float"):
            value = float(text)
            if not math.isfinite(value):
                raise ValueError(text)
            return value
    except ValueError:
        raise ConfigError(f"{source}: bad value {text!r} for {key}") from None
    return text


def read_config_file(path):
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            entries[key.strip()] = value.strip()
    return entries


def _parse_sets(items):
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def load_config(args, flag_values):
    cfg = RunConfig()
    if args.config:
        cfg.update(read_config_file(args.config), args.config)
    cfg.update(_parse_sets(args.set), "--set")
    cfg.update({k: v for k, v in flag_values.items() if v is not None}, "flags")
    return cfg.validate()


# --------------------------------------------------------------------------
# commands


class _Out:
    def __init__(self, quiet):
        self.quiet = quiet

    def __call__(self, *lines):
        if not self.quiet:
            for line in lines:
                print(line)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_simulate(args, say):
    cfg = load_config(args, {"dt": args.dt, "t_end": args.t_end, "force": args.force})
    profile = ForceProfile.parse(cfg.force)
    traj = simulate(profile, cfg.geometry(), cfg.gas(), cfg.piston(), cfg.simulation(), cfg.transducer())
    if args.out:
        _write(args.out, traj.to_csv())
    end = traj.final_state
    settle = traj.settle_time()
    say(
        f"final state: t = {end.t:.6g} s, x = {end.x:.9g} m, v = {end.v:.3g} m/s, p = {end.p:.9g} Pa",
        f"p*V^gamma drift: {traj.invariant_drift():.3e}",
        "settle time (|v| < 1e-6 m/s): " + ("not settled" if settle is None else f"{settle:.6g} s"),
    )
    return EXIT_OK


def cmd_dimension(args, say):
    given = {k: getattr(args, k) for k in ("force", "pressure", "diameter") if getattr(args, k) is not None}
    if len(given) != 2:
        args.parser.print_usage(sys.stderr)
        raise ConfigError("give exactly two of --force, --pressure, --diameter")
    if "diameter" not in given:
        d = solve_diameter(args.force, args.pressure)
        print(f"diameter = {d * 1e3:.2f} mm")
        f, p = args.force, args.pressure
    elif "force" not in given:
        d, p = args.diameter, args.pressure
        f = solve_force(p, d)
        print(f"force = {f:.2f} N")
    else:
        f, d = args.force, args.diameter
        p = solve_pressure(f, d)
        print(f"pressure = {p:.6g} Pa")
    say(f"F = p*pi*d^2/4: F = {f:.6g} N, p = {p:.6g} Pa, d = {d * 1e3:.6g} mm")
    return EXIT_OK


def cmd_synth(args, say):
    cfg = load_config(args, {"seed": args.seed, "noise": args.noise})
    if not args.out:
        raise ConfigError("synth needs --out <dataset.csv>")
    ds = run_synthetic_calibration(
        cfg.schedule(),
        cfg.geometry(),
        cfg.gas(),
        cfg.piston(),
        cfg.simulation(),
        cfg.transducer(),
        noise_sigma=cfg.noise,
        seed=cfg.seed,
        settle=cfg.settle(),
    )
    _write(args.out, serialize_dataset(ds))
    say(f"wrote {len(ds.force_levels)} levels x 6 series to {args.out}")
    return EXIT_OK


def _fmt(x, spec=".6g"):
    return "-" if x is None else format(x, spec)


def cmd_analyze(args, say):
    cfg = load_config(args, {"mode": args.mode, "case": args.case, "degree": args.degree})
    try:
        with open(args.dataset, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.dataset}: {exc.strerror}") from None
    ds = parse_dataset(text)
    case = CASE_A if cfg.case == "A" else CASE_B
    result = analyze(ds, cfg.mode, case, cfg.degree, cfg.budget_inputs(), cfg.u_fit_degree)
    if args.out:
        _write(args.out, to_json(result))
    if args.csv:
        _write(args.csv, to_csv(result))

    rep, cls = result.report, result.classification
    rows = {} if result.budget is None else {r.force_kgf: r for r in result.budget.rows}
    say(f"mode {rep.mode}, case {cfg.case}")
    say(f"{'F kgf':>7} {'X_r V':>12} {'b %':>10} {'b_prime %':>10} {'v %':>10} {'f_c %':>10} {'U %':>10}")
    for lv in rep.levels:
        row = rows.get(lv.force_kgf)
        say(
            f"{lv.force_kgf:>7g} {lv.x_bar_r:>12.8g} {lv.b:>10.6g} {lv.b_prime:>10.6g} {lv.v:>10.6g} "
            f"{_fmt(lv.f_c):>10} {_fmt(None if row is None else 100 * row.U):>10}"
        )
    for key, f0 in rep.f0.items():
        alt = rep.f0_alternative.get(key)
        extra = "" if alt is None else f" (X_N from decreasing leg: {alt['f0']:.6g} %)"
        say(f"f0 {key}: {f0:.6g} %{extra}")
    for note in result.notes:
        say(f"note: {note}")
    label = "none" if cls.assigned_class is None else f"{cls.assigned_class:g}"
    rng = "" if cls.classified_range is None else f" over {cls.classified_range[0]:g}-{cls.classified_range[1]:g} kgf"
    say(f"class: {label}{rng}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _global_options(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, metavar="PATH", help="key=value configuration file")
    parser.add_argument("--out", default=default, metavar="PATH", help="output file")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="suppress summaries on standard output")
    parser.add_argument("--set", action="append", default=default, metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")


def build_parser():
    parser = _Parser(prog="pneuforce", description="Pneumatic force sensor simulator and calibration toolkit.")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="integrate the sensor under a force profile")
    _global_options(p, suppress=True)
    p.add_argument("--force", help="force profile, e.g. step:39.24@1.0 or ramp:40@0-2 (N)")
    p.add_argument("--dt", help="time step, s")
    p.add_argument("--t-end", dest="t_end", help="end time, s")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dimension", help="solve force = gauge pressure x piston area for the missing quantity")
    _global_options(p, suppress=True)
    p.add_argument("--force", type=float, help="N")
    p.add_argument("--pressure", type=float, help="gauge pressure, Pa")
    p.add_argument("--diameter", type=float, help="piston diameter, m")
    p.set_defaults(func=cmd_dimension, parser=p)

    p = sub.add_parser("synth", help="write a synthetic calibration dataset")
    _global_options(p, suppress=True)
    p.add_argument("--seed", help="noise seed")
    p.add_argument("--noise", help="reading noise standard deviation, V")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="errors, uncertainty and class of a calibration dataset")
    _global_options(p, suppress=True)
    p.add_argument("dataset", help="calibration dataset CSV")
    p.add_argument("--mode", choices=("raw", "zero"))
    p.add_argument("--case", choices=("A", "B"))
    p.add_argument("--degree", choices=("1", "2", "3"), help="interpolation fit degree (case A)")
    p.add_argument("--csv", metavar="PATH", help="also write the flat per-level CSV here")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    say = _Out(args.quiet)
    try:
        return args.func(args, say)
    except (NumericInstabilityError, CalibrationError, TimeoutError) as exc:
        return _fail(exc, EXIT_NUMERIC)
    except (BudgetError, ClassificationError, DegenerateScaleError, FitError) as exc:
        return _fail(exc, EXIT_INCOMPLETE)
    except (PneuforceError, ValueError, OSError) as exc:
        return _fail(exc, EXIT_CONFIG)


def _fail(exc, code):
    print(f"pneuforce: error: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
