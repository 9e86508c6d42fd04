"""Physical types of the pneumatic force sensor and the algebra between them.

Everything is SI internally. Forces in kgf only appear at the I/O boundary and
convert with the standard gravity below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import DomainError, RangeError

STANDARD_GRAVITY = 9.80665  # m/s^2, exact by definition of the kgf


def kgf_to_newton(f_kgf, g=STANDARD_GRAVITY):
    return f_kgf * g


def newton_to_kgf(f_n, g=STANDARD_GRAVITY):
    return f_n / g


def _require_positive(**values):
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class GasProperties:
    """Thermodynamic constants of the air sealed in the chamber.

    ``gamma`` is the polytropic exponent: 1.0 for isothermal compression,
    1.4 for adiabatic air.
    """

    gamma: float = 1.4
    R: float = 287.0
    T0: float = 293.15
    p_atm: float = 1.013e5

    def __post_init__(self):
        if not self.gamma >= 1.0:
            raise DomainError(f"gamma must be >= 1, got {self.gamma!r}")
        _require_positive(R=self.R, T0=self.T0, p_atm=self.p_atm)


@dataclass(frozen=True)
class SensorGeometry:
    d_piston: float
    stroke_max: float
    d_dead: float
    l_dead: float
    area: float = field(init=False)
    v_dead: float = field(init=False)

    def __post_init__(self):
        _require_positive(
            d_piston=self.d_piston,
            stroke_max=self.stroke_max,
            d_dead=self.d_dead,
            l_dead=self.l_dead,
        )
        object.__setattr__(self, "area", math.pi * self.d_piston**2 / 4.0)
        object.__setattr__(self, "v_dead", math.pi * (self.d_dead / 2.0) ** 2 * self.l_dead)


def make_geometry(d_piston=10e-3, stroke_max=4e-3, d_dead=4e-3, l_dead=3e-3):
    """Build a :class:`SensorGeometry`; defaults describe the 10 mm prototype."""
    return SensorGeometry(d_piston, stroke_max, d_dead, l_dead)


@dataclass(frozen=True)
class PistonParams:
    mass: float = 8e-3
    f_viscous: float = 190.0  # N*s/m
    f_coulomb: float = 10.0  # N
    alpha: float = 0.0  # rad, inclination of the sensor axis
    g: float = STANDARD_GRAVITY

    def __post_init__(self):
        _require_positive(mass=self.mass, g=self.g)
        if self.f_viscous < 0:
            raise DomainError(f"f_viscous must be >= 0, got {self.f_viscous!r}")
        if self.f_coulomb < 0:
            raise DomainError(f"f_coulomb must be >= 0, got {self.f_coulomb!r}")
        if not -math.pi / 2 <= self.alpha <= math.pi / 2:
            raise DomainError(f"alpha must lie in [-pi/2, pi/2], got {self.alpha!r}")


@dataclass(frozen=True)
class SensorState:
    """Piston position ``x`` (chamber length), velocity ``v``, absolute chamber pressure ``p``."""

    x: float
    v: float
    p: float
    t: float = 0.0

    def __post_init__(self):
        if not self.p > 0:
            raise DomainError(f"chamber pressure must be > 0, got {self.p!r}")
        if not self.x >= 0:
            raise DomainError(f"piston position must be >= 0, got {self.x!r}")

    def check(self, geom: SensorGeometry):
        if self.x > geom.stroke_max:
            raise DomainError(
                f"piston position {self.x!r} exceeds stroke_max {geom.stroke_max!r}"
            )
        return self


@dataclass(frozen=True)
class TransducerParams:
    """Linear pressure transducer; defaults are the MPX5500D typical figures."""

    v_offset: float = 0.2
    sensitivity: float = 9.0e-6  # V/Pa
    p_max: float = 5.0e5
    v_full_scale: float = 4.7

    def __post_init__(self):
        _require_positive(sensitivity=self.sensitivity, p_max=self.p_max)
        span = self.v_offset + self.sensitivity * self.p_max
        if abs(span - self.v_full_scale) > 1e-9:
            raise DomainError(
                f"v_offset + sensitivity*p_max = {span!r} V does not match "
                f"v_full_scale = {self.v_full_scale!r} V"
            )


class TransducerReading(NamedTuple):
    volts: float
    saturated: bool


def chamber_volume(geom: SensorGeometry, x):
    if not 0.0 <= x <= geom.stroke_max:
        raise DomainError(f"x = {x!r} m outside [0, {geom.stroke_max!r}]")
    return geom.area * x + geom.v_dead


def pressure_to_force(p_gauge, geom: SensorGeometry):
    return p_gauge * geom.area


def transducer_voltage(p_diff, t: TransducerParams = TransducerParams()) -> TransducerReading:
    """Output voltage for a differential pressure, clamped to the output span.

    Driving the sensor past either end of its range is legitimate during
    overload tests, so it is reported through ``saturated`` instead of raising.
    """
    if p_diff < 0.0:
        return TransducerReading(t.v_offset, True)
    if p_diff > t.p_max:
        return TransducerReading(t.v_full_scale, True)
    return TransducerReading(t.v_offset + t.sensitivity * p_diff, False)


def voltage_to_pressure(v, t: TransducerParams = TransducerParams()):
    if not t.v_offset <= v <= t.v_full_scale:
        raise RangeError(
            f"voltage {v!r} V outside transducer range [{t.v_offset!r}, {t.v_full_scale!r}] V",
            v,
        )
    return (v - t.v_offset) / t.sensitivity
