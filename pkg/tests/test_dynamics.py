import io
import math

import numpy as np
import pytest

from pneuforce.core_model import GasProperties, PistonParams, SensorState, TransducerParams, make_geometry
from pneuforce.dynamics import (
    ForceProfile,
    SimulationConfig,
    friction_force,
    integrate_step,
    net_drive,
    pressure_rate,
    settle_under_load,
    simulate,
    state_derivative,
)
from pneuforce.errors import DomainError, NumericInstabilityError

GEOM = make_geometry()
GAS = GasProperties()
PISTON = PistonParams()


def reference_rhs(x, v, p, force, piston=PISTON, gas=GAS, geom=GEOM):
    """Free-sliding equations written out independently of the kernel."""
    vol = geom.area * x + geom.v_dead
    dp = -gas.gamma * p * geom.area * v / vol
    drive = (p - gas.p_atm) * geom.area - piston.mass * piston.g * math.sin(piston.alpha) - force
    fr = piston.f_coulomb * math.copysign(1.0, v) + piston.f_viscous * v
    return v, (drive - fr) / piston.mass, dp


def reference_rk4(state, force, dt):
    y = np.array([state.x, state.v, state.p])
    k1 = np.array(reference_rhs(*y, force))
    k2 = np.array(reference_rhs(*(y + dt / 2 * k1), force))
    k3 = np.array(reference_rhs(*(y + dt / 2 * k2), force))
    k4 = np.array(reference_rhs(*(y + dt * k3), force))
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def test_pressure_rate_matches_formula():
    s = SensorState(2e-3, -0.01, 3e5)
    vol = GEOM.area * 2e-3 + GEOM.v_dead
    assert pressure_rate(s, GEOM, GAS) == pytest.approx(1.4 * 3e5 * GEOM.area * 0.01 / vol)
    inflow = pressure_rate(SensorState(2e-3, 0.0, 3e5), GEOM, GAS, qm=1e-7)
    assert inflow == pytest.approx(287.0 * 293.15 * 1.4 * 1e-7 / vol)


def test_friction_regimes():
    p = PistonParams(f_viscous=190.0, f_coulomb=10.0)
    assert friction_force(0.01, 0.0, p) == pytest.approx(10.0 + 1.9)
    assert friction_force(-0.01, 0.0, p) == pytest.approx(-11.9)
    # stuck: friction balances the drive exactly
    assert friction_force(0.0, 7.5, p) == 7.5
    assert friction_force(5e-5, -9.0, p) == -9.0
    # breaking away: Coulomb limit in the drive direction
    assert friction_force(0.0, 12.0, p) == 10.0
    assert friction_force(0.0, -12.0, p) == -10.0


def test_friction_without_coulomb_is_viscous():
    p = PistonParams(f_coulomb=0.0)
    assert friction_force(5e-5, 3.0, p) == pytest.approx(190.0 * 5e-5)


def test_net_drive_includes_gravity():
    p = PistonParams(alpha=math.pi / 2)
    s = SensorState(2e-3, 0.0, GAS.p_atm)
    assert net_drive(s, 1.0, GEOM, GAS, p) == pytest.approx(-p.mass * p.g - 1.0)


def test_step_matches_reference_rk4_while_sliding():
    s = SensorState(2.5e-3, -0.02, 3.2e5)
    for dt in (1e-5, 4e-5):
        got = integrate_step(s, 39.24, GEOM, GAS, PISTON, dt=dt)
        ref = reference_rk4(s, 39.24, dt)
        np.testing.assert_allclose([got.x, got.v, got.p], ref, rtol=1e-12, atol=1e-15)


def test_resting_on_stop_is_projected():
    s = SensorState(4e-3, 0.0, 2.37e5)
    dx, dv, dp = state_derivative(s, 0.0, GEOM, GAS, PISTON)
    assert (dx, dv, dp) == (0.0, 0.0, 0.0)
    nxt = integrate_step(s, 0.0, GEOM, GAS, PISTON)
    assert (nxt.x, nxt.v, nxt.p) == (s.x, 0.0, s.p)


def test_inflow_on_stop_raises_pressure():
    cfg = SimulationConfig(qm=1e-8)
    s = SensorState(4e-3, 0.0, 2.37e5)
    nxt = integrate_step(s, 0.0, GEOM, GAS, PISTON, cfg)
    vol = GEOM.area * 4e-3 + GEOM.v_dead
    assert nxt.p - s.p == pytest.approx(cfg.dt * 287.0 * 293.15 * 1.4 * 1e-8 / vol)


def test_zero_force_keeps_rest_state():
    traj = simulate(ForceProfile.parse("constant:0"), cfg=SimulationConfig(t_end=0.2))
    for col in (traj.x, traj.v, traj.p):
        assert np.all(col == col[0])


def test_heavy_load_stops_at_bottom():
    cfg = SimulationConfig(t_end=1.0, p0=1.2e5)
    traj = simulate(ForceProfile("step", (400.0,), (0.1,)), cfg=cfg)
    assert traj.x.min() == 0.0
    assert traj.final_state.x == 0.0 and traj.final_state.v == 0.0
    assert traj.invariant_drift() < 1e-9


@pytest.mark.parametrize("gamma", [1.0, 1.4])
def test_polytropic_invariant_kept(gamma):
    traj = simulate(ForceProfile("ramp", (30.0,), (0.1, 0.6)), gas=GasProperties(gamma=gamma),
                    cfg=SimulationConfig(t_end=1.0))
    assert traj.invariant_drift() < 1e-9


def test_frictionless_settles_at_exact_balance():
    piston = PistonParams(f_coulomb=0.0)
    s = settle_under_load(SensorState(4e-3, 0.0, 2.37e5), 0.0, 30.0, GEOM, GAS, piston, SimulationConfig())
    assert s.p == pytest.approx(GAS.p_atm + 30.0 / GEOM.area, rel=1e-12)


def test_settle_ends_inside_friction_band():
    s = settle_under_load(SensorState(4e-3, 0.0, 2.37e5), 0.0, 30.0, GEOM, GAS, PISTON, SimulationConfig())
    assert s.v == 0.0
    drive = (s.p - GAS.p_atm) * GEOM.area - 30.0
    assert abs(drive) <= PISTON.f_coulomb * (1 + 1e-12)


def test_inclination_shifts_balance():
    tilted = PistonParams(f_coulomb=0.0, alpha=math.pi / 2)
    s = settle_under_load(SensorState(4e-3, 0.0, 2.37e5), 0.0, 30.0, GEOM, GAS, tilted, SimulationConfig())
    expected = GAS.p_atm + (30.0 + tilted.mass * tilted.g) / GEOM.area
    assert s.p == pytest.approx(expected, rel=1e-12)


def test_settle_timeout():
    with pytest.raises(TimeoutError):
        settle_under_load(SensorState(4e-3, 0.0, 2.37e5), 0.0, 30.0, GEOM, GAS, PISTON, SimulationConfig(),
                          max_time=1e-3)


def test_unstable_step_size_raises():
    cfg = SimulationConfig(dt=2e-3, t_end=2.0, input_filter_tau=0.0)
    with pytest.raises(NumericInstabilityError) as info:
        simulate(ForceProfile("step", (39.24,), (0.1,)), cfg=cfg)
    assert info.value.t is not None


def _richardson(piston, dts=(4e-5, 2e-5, 1e-5), span=0.02):
    profile = ForceProfile("step", (39.24,), (1.0,))
    base = simulate(profile, piston=piston, cfg=SimulationConfig(t_end=1.1))
    k = int(np.nonzero(np.abs(base.v) > 1e-3)[0][0]) + 1000  # 10 ms into the sliding phase
    s0 = SensorState(base.x[k], base.v[k], base.p[k], base.t[k])
    finals = []
    for dt in dts:
        tr = simulate(profile, piston=piston, cfg=SimulationConfig(dt=dt, t_end=span), initial=s0,
                      initial_force=base.F_in[k])
        assert np.all(np.abs(tr.v) > 1e-4)
        finals.append(np.array([tr.x[-1], tr.v[-1], tr.p[-1]]))
    a, b, c = finals
    return np.log2(np.abs(a - b) / np.abs(b - c))


def test_order_is_four_when_viscous_mode_is_resolved():
    orders = _richardson(PistonParams(f_viscous=19.0))
    assert np.all((orders > 3.9) & (orders < 4.15)), orders


def test_stiff_viscous_mode_is_preasymptotic_at_these_steps():
    # textbook RK4 on v' = -(B/m) v over the same step sizes: the observed
    # order exceeds 4.3 because |lambda| dt is close to 1
    lam = -PISTON.f_viscous / PISTON.mass

    def rk4(h, n, y=1.0):
        for _ in range(n):
            k1 = lam * y
            k2 = lam * (y + h / 2 * k1)
            k3 = lam * (y + h / 2 * k2)
            k4 = lam * (y + h * k3)
            y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return y

    a, b, c = (rk4(h, int(round(2e-4 / h))) for h in (4e-5, 2e-5, 1e-5))
    assert math.log2(abs(a - b) / abs(b - c)) > 4.3
    assert np.all(_richardson(PISTON) > 4.3)


def test_trajectory_csv():
    traj = simulate(ForceProfile.parse("step:10@0.001"), cfg=SimulationConfig(t_end=0.002, decimation=10))
    text = traj.to_csv()
    lines = text.splitlines()
    assert lines[0] == "t,x,v,p,F_in,V_out"
    assert len(lines) == len(traj) + 1 == 22
    buf = io.StringIO()
    traj.to_csv(buf)
    assert buf.getvalue() == text
    assert float(lines[1].split(",")[5]) == pytest.approx(TransducerParams().v_offset + 9e-6 * (2.37e5 - GAS.p_atm))


def test_filter_output_reaches_input_exactly():
    traj = simulate(ForceProfile.parse("step:39.24@0.1"), cfg=SimulationConfig(t_end=3.0, decimation=100))
    assert traj.F_in[-1] == 39.24


@pytest.mark.parametrize("text,kind,levels,times", [
    ("constant:5", "constant", (5.0,), ()),
    ("step:39.24@1.0", "step", (39.24,), (1.0,)),
    ("ramp:40@0-2", "ramp", (40.0,), (0.0, 2.0)),
    ("staircase:10,20,30@1,2,3", "staircase", (10.0, 20.0, 30.0), (1.0, 2.0, 3.0)),
    ("table:0:0,1:10,2:5", "table", (0.0, 10.0, 5.0), (0.0, 1.0, 2.0)),
])
def test_profile_parse(text, kind, levels, times):
    assert ForceProfile.parse(text) == ForceProfile(kind, levels, times)


def test_profile_values():
    t = np.array([0.0, 0.5, 1.0, 1.5, 2.5])
    np.testing.assert_allclose(ForceProfile.parse("step:4@1")(t), [0, 0, 4, 4, 4])
    np.testing.assert_allclose(ForceProfile.parse("ramp:4@1-2")(t), [0, 0, 0, 2, 4])
    np.testing.assert_allclose(ForceProfile.parse("staircase:1,3@0.5,1.5")(t), [0, 1, 1, 3, 3])
    np.testing.assert_allclose(ForceProfile.parse("table:0:0,2:4")(t), [0, 1, 2, 3, 4])
    assert ForceProfile.parse("constant:2")(0.3) == 2.0


@pytest.mark.parametrize("text", ["wave:1", "step:1", "ramp:1@2-1", "staircase:1,2@1", "table:x:1", "constant:"])
def test_bad_profiles(text):
    with pytest.raises(DomainError):
        ForceProfile.parse(text)


@pytest.mark.parametrize("kw,msg", [({"dt": -1}, "dt must be > 0"), ({"dt": 0}, "dt must be > 0"),
                                    ({"decimation": 0}, "decimation"), ({"input_filter_tau": -1}, "tau")])
def test_config_validation(kw, msg):
    with pytest.raises(DomainError, match=msg):
        SimulationConfig(**kw)


def test_initial_position_beyond_stroke():
    with pytest.raises(DomainError):
        simulate(ForceProfile.parse("constant:0"), cfg=SimulationConfig(x0=5e-3))
