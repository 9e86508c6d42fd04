"""Scalar, JIT-compiled model kernels.

All model parameters travel as one flat float array ``P`` indexed by the
constants below, so the kernels stay free of Python objects.
"""
import math

import numpy as np
from numba import njit

AREA, V_DEAD, STROKE, GAMMA, R_GAS, T0, P_ATM, QM, MASS, F_VF, F_CF, ALPHA, G, V_STICK = range(14)
N_PARAMS = 14

# status codes returned by the loops
OK = 0
NON_FINITE = 1
NOT_SETTLED = 2


@njit(cache=True)
def pressure_rate(x, v, p, P):
    return (P[R_GAS] * P[T0] * P[GAMMA] * P[QM] - P[GAMMA] * p * P[AREA] * v) / (
        P[AREA] * x + P[V_DEAD]
    )


@njit(cache=True)
def friction(v, drive, f_cf, f_vf, v_stick):
    # without Coulomb friction there is no discontinuity to regularize
    if abs(v) >= v_stick or f_cf == 0.0:
        return f_cf * math.copysign(1.0, v) + f_vf * v
    if abs(drive) <= f_cf:
        return drive
    return f_cf * math.copysign(1.0, drive)


@njit(cache=True)
def net_drive(p, force, P):
    return (p - P[P_ATM]) * P[AREA] - P[MASS] * P[G] * math.sin(P[ALPHA]) - force


@njit(cache=True)
def resting_on_stop(x, v, acc, P):
    return (x <= 0.0 and v <= 0.0 and acc <= 0.0) or (x >= P[STROKE] and v >= 0.0 and acc >= 0.0)


@njit(cache=True)
def derivative(x, v, p, force, P):
    drive = net_drive(p, force, P)
    fr = friction(v, drive, P[F_CF], P[F_VF], P[V_STICK])
    acc = (drive - fr) / P[MASS]
    dx = v
    if resting_on_stop(x, v, acc, P):
        dx = 0.0
        acc = 0.0
    return dx, acc, pressure_rate(x, dx, p, P)


@njit(cache=True)
def _free_derivative(x, v, p, force, P):
    drive = net_drive(p, force, P)
    fr = friction(v, drive, P[F_CF], P[F_VF], P[V_STICK])
    return v, (drive - fr) / P[MASS], pressure_rate(x, v, p, P)


@njit(cache=True)
def rk4_step(x, v, p, d, r0, rm, r1, dt, tau, P):
    """One RK4 step of (x, v, p) under a low-pass filtered input force.

    ``r0, rm, r1`` are the raw input force at the start, middle and end of
    the step and ``d`` is the filter lag (filtered minus raw force) at the
    start. The lag is advanced exactly for input that is linear on each half
    step, and is carried as a deviation so that it decays to zero instead of
    stalling below the rounding step of the force. With ``tau <= 0`` the raw
    force drives the model directly. Returns (x, v, p, lag at the end).

    Whether the piston rests on a stop is decided once at the start of the
    step; otherwise all stages use the free dynamics and a crossing is
    resolved by the clamp afterwards.
    """
    if tau > 0.0:
        e = math.exp(-0.5 * dt / tau)
        s1 = (rm - r0) / (0.5 * dt) * tau
        s2 = (r1 - rm) / (0.5 * dt) * tau
        d2 = -s1 + (d + s1) * e
        dn = -s2 + (d2 + s2) * e
    else:
        d = 0.0
        d2 = 0.0
        dn = 0.0
    f0 = r0 + d
    u2 = rm + d2
    u3 = u2
    u4 = r1 + dn
    un = u4

    if abs(v) < P[V_STICK] and abs(net_drive(p, f0, P)) <= P[F_CF]:
        v = 0.0
    v_in = v

    k1x, k1v, k1p = _free_derivative(x, v, p, f0, P)
    if resting_on_stop(x, v, k1v, P):
        # sealed volume is fixed; only the inflow changes the pressure
        pn = p + dt * P[R_GAS] * P[T0] * P[GAMMA] * P[QM] / (P[AREA] * x + P[V_DEAD])
        return x, 0.0, pn, dn

    k2x, k2v, k2p = _free_derivative(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v, p + 0.5 * dt * k1p, u2, P)
    k3x, k3v, k3p = _free_derivative(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v, p + 0.5 * dt * k2p, u3, P)
    k4x, k4v, k4p = _free_derivative(x + dt * k3x, v + dt * k3v, p + dt * k3p, u4, P)

    h6 = dt / 6.0
    xn = x + h6 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    vn = v + h6 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    pn = p + h6 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)

    # hard stops: inelastic. The pressure is carried from the start of the
    # step along p*V^gamma to the stop volume, plus the inflow over the step.
    if xn < 0.0 or xn > P[STROKE]:
        xn = 0.0 if xn < 0.0 else P[STROKE]
        vol_stop = P[AREA] * xn + P[V_DEAD]
        pn = p * ((P[AREA] * x + P[V_DEAD]) / vol_stop) ** P[GAMMA]
        pn += dt * P[R_GAS] * P[T0] * P[GAMMA] * P[QM] / vol_stop
        if vn * (xn - 0.5 * P[STROKE]) > 0.0:
            vn = 0.0

    # velocity reversal or entry into the band while drive is inside it: stick
    if (vn * v_in < 0.0 or abs(vn) < P[V_STICK]) and abs(net_drive(pn, un, P)) <= P[F_CF]:
        vn = 0.0

    return xn, vn, pn, dn


@njit(cache=True)
def simulate_loop(x, v, p, u, raw_half, dt, tau, n_steps, decimation, P, out):
    """Integrate ``n_steps`` steps, writing every ``decimation``-th state to ``out``.

    ``raw_half[k]`` is the raw force at ``t = k*dt/2`` and ``u`` the filtered
    force at the start. ``out`` rows are (x, v, p, F_in). Returns (status,
    failing step index).
    """
    d = u - raw_half[0] if tau > 0.0 else 0.0
    out[0, 0] = x
    out[0, 1] = v
    out[0, 2] = p
    out[0, 3] = raw_half[0] + d
    row = 1
    for k in range(n_steps):
        x, v, p, d = rk4_step(
            x, v, p, d, raw_half[2 * k], raw_half[2 * k + 1], raw_half[2 * k + 2], dt, tau, P
        )
        if not (math.isfinite(x) and math.isfinite(v) and math.isfinite(p) and p > 0.0):
            return NON_FINITE, k + 1
        if (k + 1) % decimation == 0:
            out[row, 0] = x
            out[row, 1] = v
            out[row, 2] = p
            out[row, 3] = raw_half[2 * k + 2] + d
            row += 1
    return OK, n_steps


@njit(cache=True)
def settle_loop(x, v, p, f_from, f_to, ramp_time, dt, settle_time, dp_tol, max_time, P):
    """Ramp the load linearly from ``f_from`` to ``f_to``, then hold until settled.

    Settled means that for ``settle_time`` of simulated time |v| < v_stick and
    the pressure either did not change at all between steps or changed at
    less than ``dp_tol`` Pa/s. Returns (status, x, v, p, elapsed).
    """
    n_ramp = int(math.ceil(ramp_time / dt)) if ramp_time > 0.0 else 0
    n_max = n_ramp + int(math.ceil(max_time / dt))
    n_window = max(1, int(math.ceil(settle_time / dt)))
    quiet = 0
    for k in range(n_max):
        if k < n_ramp:
            r0 = f_from + (f_to - f_from) * (k / n_ramp)
            rm = f_from + (f_to - f_from) * ((k + 0.5) / n_ramp)
            r1 = f_to if k + 1 == n_ramp else f_from + (f_to - f_from) * ((k + 1.0) / n_ramp)
        else:
            r0 = f_to
            rm = f_to
            r1 = f_to
        p_prev = p
        x, v, p, _ = rk4_step(x, v, p, 0.0, r0, rm, r1, dt, 0.0, P)
        if not (math.isfinite(x) and math.isfinite(v) and math.isfinite(p) and p > 0.0):
            return NON_FINITE, x, v, p, (k + 1) * dt
        if k + 1 < n_ramp:
            continue
        if abs(v) < P[V_STICK] and (p == p_prev or abs(p - p_prev) < dp_tol * dt):
            quiet += 1
        else:
            quiet = 0
        if quiet >= n_window:
            return OK, x, v, p, (k + 1) * dt
    return NOT_SETTLED, x, v, p, n_max * dt


def pack_params(geom, gas, piston, qm, v_stick):
    P = np.empty(N_PARAMS)
    P[AREA] = geom.area
    P[V_DEAD] = geom.v_dead
    P[STROKE] = geom.stroke_max
    P[GAMMA] = gas.gamma
    P[R_GAS] = gas.R
    P[T0] = gas.T0
    P[P_ATM] = gas.p_atm
    P[QM] = qm
    P[MASS] = piston.mass
    P[F_VF] = piston.f_viscous
    P[F_CF] = piston.f_coulomb
    P[ALPHA] = piston.alpha
    P[G] = piston.g
    P[V_STICK] = v_stick
    return P
