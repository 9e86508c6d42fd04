"""Closed-form sizing relations: force = gauge pressure x piston area, and the ideal-gas laws."""
import math

from .errors import DomainError


def _positive(**values):
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be > 0, got {value!r}")


def solve_diameter(f_max, p_max_gauge):
    """Piston diameter (m) that turns ``p_max_gauge`` Pa into ``f_max`` N."""
    _positive(f_max=f_max, p_max_gauge=p_max_gauge)
    return 2.0 * math.sqrt(f_max / (math.pi * p_max_gauge))


def solve_force(p_gauge, d):
    _positive(d=d)
    return p_gauge * math.pi * (d / 2.0) ** 2


def solve_pressure(force, d):
    _positive(d=d)
    return force / (math.pi * (d / 2.0) ** 2)


def boyle(p1, v1, v2):
    """Isothermal pressure after a volume change, p1*v1 = p2*v2."""
    _positive(p1=p1, v1=v1, v2=v2)
    return p1 * v1 / v2


def charles(v1, t1, t2):
    """Isobaric volume after a change of absolute temperature."""
    _positive(v1=v1, t1=t1, t2=t2)
    return v1 * t2 / t1


def amonton(p1, t1, t2):
    """Isochoric pressure after a change of absolute temperature."""
    _positive(p1=p1, t1=t1, t2=t2)
    return p1 * t2 / t1
