"""Continuous dynamics of the sealed-chamber sensor and its fixed-step integrator.

Sign convention: a positive external force compresses the chamber, driving
the piston position ``x`` toward 0. Chamber pressure is absolute.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel as K
from .core_model import (
    GasProperties,
    PistonParams,
    SensorGeometry,
    SensorState,
    TransducerParams,
    make_geometry,
)
from .errors import DomainError, NumericInstabilityError

PROFILE_KINDS = ("constant", "step", "ramp", "staircase", "table")


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 1e-5
    t_end: float = 5.0
    qm: float = 0.0  # kg/s into the chamber; 0 for the sealed sensor
    v_stick: float = 1e-4
    p0: float = 2.37e5
    x0: float = 4e-3
    input_filter_tau: float = 0.05
    decimation: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("dt must be > 0")
        if not self.t_end >= self.dt:
            raise DomainError("t_end must be >= dt")
        if not self.v_stick > 0:
            raise DomainError("v_stick must be > 0")
        if not self.p0 > 0:
            raise DomainError("p0 must be > 0")
        if not self.x0 >= 0:
            raise DomainError("x0 must be >= 0")
        if self.input_filter_tau < 0:
            raise DomainError("input_filter_tau must be >= 0")
        if int(self.decimation) != self.decimation or self.decimation < 1:
            raise DomainError("decimation must be a positive integer")

    def check(self, geom: SensorGeometry):
        if self.x0 > geom.stroke_max:
            raise DomainError(f"x0 = {self.x0!r} exceeds stroke_max = {geom.stroke_max!r}")
        return self

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class ForceProfile:
    """Raw external force as a function of time.

    kinds and their parameters:

    * ``constant``: ``levels=(F,)``
    * ``step``: ``levels=(F,)``, ``times=(t0,)``; 0 before t0, F from t0 on
    * ``ramp``: ``levels=(F,)``, ``times=(t0, t1)``; linear 0 -> F over [t0, t1]
    * ``staircase``: ``levels=(F1, ...)``, ``times=(t1, ...)``; holds Fi from ti
    * ``table``: ``levels``/``times`` samples, linearly interpolated, held at the ends
    """

    kind: str
    levels: tuple = ()
    times: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(f) for f in self.levels))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        n_levels, n_times = len(self.levels), len(self.times)
        if self.kind == "constant":
            ok = n_levels == 1
        elif self.kind == "step":
            ok = n_levels == 1 and n_times == 1
        elif self.kind == "ramp":
            ok = n_levels == 1 and n_times == 2 and self.times[1] > self.times[0]
        elif self.kind == "staircase":
            ok = n_levels >= 1 and n_levels == n_times
            if ok and any(f < 0 for f in self.levels):
                raise DomainError("staircase levels must be non-negative")
            if ok and any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise DomainError("staircase times must be strictly increasing")
        elif self.kind == "table":
            ok = n_levels >= 1 and n_levels == n_times
            if ok and any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise DomainError("table samples must be strictly increasing in time")
        else:
            raise DomainError(f"unknown force profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        if not ok:
            raise DomainError(f"bad parameters for {self.kind} profile: levels={self.levels} times={self.times}")

    @classmethod
    def parse(cls, text):
        """Parse ``constant:F``, ``step:F@t0``, ``ramp:F@t0-t1``,
        ``staircase:F1,F2,...@t1,t2,...`` or ``table:t0:F0,t1:F1,...``."""
        kind, _, rest = text.partition(":")
        kind = kind.strip()
        try:
            if kind == "constant":
                return cls(kind, (float(rest),))
            if kind == "step":
                f, t0 = rest.split("@")
                return cls(kind, (float(f),), (float(t0),))
            if kind == "ramp":
                f, span = rest.split("@")
                t0, t1 = span.split("-")
                return cls(kind, (float(f),), (float(t0), float(t1)))
            if kind == "staircase":
                fs, ts = rest.split("@")
                return cls(kind, [float(f) for f in fs.split(",")], [float(t) for t in ts.split(",")])
            if kind == "table":
                pairs = [item.split(":") for item in rest.split(",")]
                return cls(kind, [float(f) for _, f in pairs], [float(t) for t, _ in pairs])
        except ValueError as exc:
            raise DomainError(f"cannot parse force profile {text!r}: {exc}") from None
        raise DomainError(f"unknown force profile kind {kind!r}; expected one of {PROFILE_KINDS}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full_like(t, self.levels[0])
        elif self.kind == "step":
            out = np.where(t >= self.times[0], self.levels[0], 0.0)
        elif self.kind == "ramp":
            t0, t1 = self.times
            out = self.levels[0] * np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
        elif self.kind == "staircase":
            idx = np.searchsorted(self.times, t, side="right") - 1
            levels = np.concatenate(([0.0], self.levels))
            out = levels[idx + 1]
        else:
            out = np.interp(t, self.times, self.levels)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class Trajectory:
    """Sampled simulation output; every column is a float array of equal length."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    p: np.ndarray
    F_in: np.ndarray
    V_out: np.ndarray
    gamma: float = 1.4
    area: float = field(default=0.0, repr=False)
    v_dead: float = field(default=0.0, repr=False)

    COLUMNS = ("t", "x", "v", "p", "F_in", "V_out")

    def __len__(self):
        return len(self.t)

    @property
    def final_state(self):
        return SensorState(float(self.x[-1]), float(self.v[-1]), float(self.p[-1]), float(self.t[-1]))

    def adiabatic_invariant(self):
        """p*V^gamma along the trajectory; constant for a sealed chamber."""
        return self.p * (self.area * self.x + self.v_dead) ** self.gamma

    def invariant_drift(self):
        inv = self.adiabatic_invariant()
        return float(np.max(np.abs(inv / inv[0] - 1.0)))

    def settle_time(self, v_tol=1e-6):
        """First sample time after which |v| stays below ``v_tol``; None if it never does."""
        moving = np.nonzero(np.abs(self.v) >= v_tol)[0]
        if len(moving) == 0:
            return float(self.t[0])
        last = moving[-1]
        if last == len(self.t) - 1:
            return None
        return float(self.t[last + 1])

    def to_csv(self, fh=None):
        buf = fh if fh is not None else io.StringIO()
        buf.write(",".join(self.COLUMNS) + "\n")
        data = np.column_stack([getattr(self, c) for c in self.COLUMNS])
        for row in data:
            buf.write(",".join("%.17g" % val for val in row) + "\n")
        if fh is None:
            return buf.getvalue()
        return None


def _params(geom, gas, piston, qm, v_stick):
    return K.pack_params(geom, gas, piston, qm, v_stick)


def pressure_rate(state: SensorState, geom: SensorGeometry, gas: GasProperties, qm=0.0):
    """Chamber pressure rate in Pa/s."""
    P = _params(geom, gas, PistonParams(), qm, 1.0)
    return K.pressure_rate(state.x, state.v, state.p, P)


def friction_force(v, net_drive, params: PistonParams, v_stick=1e-4):
    """Karnopp friction. Inside the stick band the returned force cancels the
    drive when the drive cannot overcome Coulomb friction."""
    if not v_stick > 0:
        raise DomainError("v_stick must be > 0")
    return K.friction(float(v), float(net_drive), params.f_coulomb, params.f_viscous, v_stick)


def net_drive(state: SensorState, f_ext, geom, gas, piston):
    return K.net_drive(state.p, float(f_ext), _params(geom, gas, piston, 0.0, 1.0))


def state_derivative(state: SensorState, f_ext, geom, gas, piston, cfg: SimulationConfig = SimulationConfig()):
    """Return (dx/dt, dv/dt, dp/dt) with hard-stop projection applied."""
    P = _params(geom, gas, piston, cfg.qm, cfg.v_stick)
    return K.derivative(state.x, state.v, state.p, float(f_ext), P)


def integrate_step(state: SensorState, f_ext, geom, gas, piston, cfg: SimulationConfig = SimulationConfig(), dt=None):
    """Advance ``state`` by one classical RK4 step under a constant external force."""
    dt = cfg.dt if dt is None else dt
    if not dt > 0:
        raise DomainError("dt must be > 0")
    P = _params(geom, gas, piston, cfg.qm, cfg.v_stick)
    f = float(f_ext)
    x, v, p, _ = K.rk4_step(state.x, state.v, state.p, 0.0, f, f, f, dt, 0.0, P)
    if not (math.isfinite(x) and math.isfinite(v) and math.isfinite(p) and p > 0):
        raise NumericInstabilityError(
            f"non-finite state after step at t = {state.t + dt!r} s; reduce dt", state.t + dt
        )
    return SensorState(x, v, p, state.t + dt)


def simulate(
    profile: ForceProfile,
    geom: SensorGeometry | None = None,
    gas: GasProperties | None = None,
    piston: PistonParams | None = None,
    cfg: SimulationConfig | None = None,
    transducer: TransducerParams | None = None,
    initial: SensorState | None = None,
    initial_force=None,
) -> Trajectory:
    """Integrate the sensor under ``profile`` over [0, cfg.t_end].

    The raw profile passes through a first-order lag of time constant
    ``cfg.input_filter_tau`` (advanced in the same step) unless that
    constant is 0. ``initial`` overrides the (x0, p0, v=0) start of ``cfg``;
    ``initial_force`` overrides the starting output of the input filter, which
    otherwise starts at the raw profile value.
    """
    geom = geom or make_geometry()
    gas = gas or GasProperties()
    piston = piston or PistonParams()
    cfg = (cfg or SimulationConfig()).check(geom)
    transducer = transducer or TransducerParams()
    if initial is None:
        initial = SensorState(cfg.x0, 0.0, cfg.p0, 0.0)
    initial.check(geom)

    n = cfg.n_steps
    dec = int(cfg.decimation)
    t0 = initial.t
    raw_half = np.asarray(profile(t0 + 0.5 * cfg.dt * np.arange(2 * n + 1)), dtype=float)
    out = np.empty((n // dec + 1, 4))
    P = _params(geom, gas, piston, cfg.qm, cfg.v_stick)
    u0 = raw_half[0] if initial_force is None else float(initial_force)
    status, k = K.simulate_loop(
        initial.x, initial.v, initial.p, u0, raw_half, cfg.dt, cfg.input_filter_tau, n, dec, P, out
    )
    if status != K.OK:
        t_fail = t0 + k * cfg.dt
        raise NumericInstabilityError(f"non-finite state at t = {t_fail:.9g} s; reduce dt", t_fail)

    t = t0 + cfg.dt * dec * np.arange(out.shape[0])
    gauge = out[:, 2] - gas.p_atm
    v_out = np.clip(transducer.v_offset + transducer.sensitivity * gauge, transducer.v_offset, transducer.v_full_scale)
    return Trajectory(
        t=t,
        x=out[:, 0],
        v=out[:, 1],
        p=out[:, 2],
        F_in=out[:, 3],
        V_out=v_out,
        gamma=gas.gamma,
        area=geom.area,
        v_dead=geom.v_dead,
    )


def settle_under_load(state: SensorState, f_from, f_to, geom, gas, piston, cfg: SimulationConfig,
                      ramp_time=0.5, settle_time=0.01, dp_tol=0.0, max_time=60.0):
    """Ramp the load from ``f_from`` to ``f_to`` N and hold until the piston settles.

    Returns the settled :class:`SensorState`. Raises
    :class:`NumericInstabilityError` on a non-finite state and
    :class:`TimeoutError` when ``max_time`` of holding is not enough.
    """
    P = _params(geom, gas, piston, cfg.qm, cfg.v_stick)
    status, x, v, p, elapsed = K.settle_loop(
        state.x, state.v, state.p, float(f_from), float(f_to), ramp_time, cfg.dt, settle_time, dp_tol, max_time, P
    )
    if status == K.NON_FINITE:
        raise NumericInstabilityError(f"non-finite state {elapsed:.6g} s into the load change; reduce dt", state.t + elapsed)
    if status == K.NOT_SETTLED:
        raise TimeoutError(f"piston did not settle within {max_time} s at {f_to} N")
    return SensorState(x, v, p, state.t + elapsed)
