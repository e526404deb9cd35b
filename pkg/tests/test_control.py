import math

import numpy as np
import pytest

from lowspeed.config import ControlParams, VehicleParams
from lowspeed.control import (
    FuelState,
    SharedControlState,
    column_rate,
    eco_speed_advice,
    eco_target,
    fuel_rate,
    lateral_control,
    longitudinal_control,
    pedal_feedback,
    shared_torque,
    steer_angle_to_torque,
    update_fuel,
)
from lowspeed.modes import DriverInput
from lowspeed.planner import ManeuverKind, Trajectory
from lowspeed.road import Command, RoadMap, VehicleState, step_vehicle

from test_road import seg

CP = ControlParams()
VP = VehicleParams()


def straight_traj(v=10.0, d=0.0, horizon=30.0):
    return Trajectory(kind=ManeuverKind.KEEP_LANE, horizon=horizon, s0=0.0,
                      lateral_coeffs=(d, 0, 0, 0, 0, 0),
                      speed_ts=(0.0, horizon), speed_vs=(v, v), target_lane=0)


def ego_at(s=0.0, d=0.0, v=10.0, he=0.0, steer=0.0, a=0.0):
    return VehicleState(s=s, d=d, heading_err=he, v=v, a=a, lane=0, steer=steer)


# --- lateral ----------------------------------------------------------------


def test_lateral_zero_error_straight():
    road = RoadMap([seg()])
    steer = lateral_control(ego_at(), straight_traj(), 0.0, road)
    assert steer == 0.0


def test_lateral_feedforward_on_curve():
    kappa = 0.01
    road = RoadMap([seg(curvature=kappa)])
    steer = lateral_control(ego_at(), straight_traj(), 0.0, road)
    assert steer == pytest.approx(math.atan(VP.wheelbase * kappa), abs=1e-9)


def test_lateral_error_gain():
    road = RoadMap([seg()])
    steer = lateral_control(ego_at(d=0.5), straight_traj(), 0.0, road)
    assert steer == pytest.approx(-0.25, abs=1e-9)


def closed_loop_lane_keep(d0, v, duration, dt=0.02):
    """Full torque-path loop: angle demand -> assist torque -> column rate."""
    road = RoadMap([seg(length=2000.0)])
    traj = straight_traj(v=v, horizon=duration + 5)
    ego = ego_at(d=d0, v=v)
    shared = SharedControlState()
    ds = []
    for k in range(int(duration / dt)):
        steer_des = lateral_control(ego, traj, 0.0, road)
        assist = steer_angle_to_torque(steer_des - ego.steer)
        shared = shared_torque(assist, DriverInput(), shared, dt)
        steer_cmd = ego.steer + column_rate(shared.applied_torque) * dt
        ego = step_vehicle(ego, Command(steer=steer_cmd, accel=0.0), dt, road)
        ds.append(ego.d)
    return np.array(ds)


def test_closed_loop_lane_keeping_envelope():
    # from 0.5 m offset at 10 m/s: inside 5 cm within 6 s, overshoot < 10 cm
    ds = closed_loop_lane_keep(0.5, 10.0, 8.0)
    n6 = int(6.0 / 0.02)
    assert np.all(np.abs(ds[n6:]) < 0.05)
    assert ds.min() > -0.10


# --- longitudinal -----------------------------------------------------------


def test_longitudinal_zero_at_reference_speed():
    accel = longitudinal_control(ego_at(v=10.0), straight_traj(v=10.0), 0.0, None)
    assert accel == 0.0


def test_longitudinal_gap_law_equilibrium():
    v = 10.0
    gap = CP.ctg_standstill + CP.ctg_time_gap * v
    accel = longitudinal_control(ego_at(v=v), straight_traj(v=v), 0.0, (gap, v))
    assert accel == pytest.approx(0.0, abs=1e-9)


def test_longitudinal_hard_braking_saturates():
    accel = longitudinal_control(ego_at(v=13.89), None, 0.0, (30.0, 0.0),
                                 v_ref=13.89)
    assert accel == VP.accel_min


def test_closed_loop_stop_behind_stationary_lead():
    # braking-distance oracle: the gap law must stop the car at least 2 m short
    road = RoadMap([seg(length=1000.0)])
    dt = 0.02
    ego = ego_at(v=13.89)
    lead_front = 34.5  # bumper gap 30 m from s=0
    while ego.v > 0.0:
        gap = lead_front - ego.s - VP.length
        accel = longitudinal_control(ego, None, 0.0, (gap, 0.0), v_ref=13.89)
        ego = step_vehicle(ego, Command(steer=0.0, accel=accel), dt, road)
    final_gap = lead_front - ego.s - VP.length
    assert final_gap >= 2.0
    assert final_gap < 15.0  # and it did approach rather than stop early


# --- shared torque ----------------------------------------------------------


def test_share_passthrough_without_driver():
    out = shared_torque(1.5, DriverInput(), SharedControlState(), 0.02)
    assert out.applied_torque == pytest.approx(1.5)
    assert out.authority == 1.0
    assert not out.override_active


def test_assist_saturates_at_three():
    out = shared_torque(5.0, DriverInput(), SharedControlState(), 0.02)
    assert out.assist_torque == pytest.approx(3.0)


def test_override_latch_and_attenuation():
    dt = 0.02
    state = SharedControlState()
    latched_at = None
    quiet_at = None
    t = 0.0
    for k in range(100):  # 2.0 s: pulse ends at 0.4 s, quiet period still short
        t = k * dt
        driver = DriverInput(steer_torque=-2.5) if t < 0.4 else DriverInput()
        state = shared_torque(2.0, driver, state, dt)
        if state.override_active and latched_at is None:
            latched_at = t
        if latched_at is not None and quiet_at is None and abs(state.assist_torque) <= 0.5:
            quiet_at = t
    assert latched_at is not None
    assert 0.3 <= latched_at <= 0.4
    assert quiet_at - latched_at <= 0.5
    assert state.override_active  # clears only after 2 s of quiet hands


def test_override_clears_after_quiet_period():
    dt = 0.02
    state = SharedControlState()
    for _ in range(25):  # 0.5 s of hard opposing torque
        state = shared_torque(2.0, DriverInput(steer_torque=-2.5), state, dt)
    assert state.override_active
    for _ in range(int(2.8 / dt)):  # 2 s quiet to clear + 0.5 s authority ramp
        state = shared_torque(2.0, DriverInput(), state, dt)
    assert not state.override_active
    assert state.authority == pytest.approx(1.0)


def test_assist_never_exceeds_cap_during_ramp():
    dt = 0.02
    state = SharedControlState()
    peak = 0.0
    for k in range(300):
        driver = DriverInput(steer_torque=2.6 if k < 30 else 0.0)
        state = shared_torque(-3.5, driver, state, dt)
        peak = max(peak, abs(state.assist_torque))
    assert peak <= 3.0 + 1e-9


# --- pedal feedback ---------------------------------------------------------


def test_pedal_silent_when_within_advice():
    assert pedal_feedback(2.0, 0.5) == 0.0


def test_pedal_linear_map():
    # demand = 1.0 * 2.0 m/s^2, advice 0 -> excess 2 -> 20 N
    assert pedal_feedback(0.0, 1.0) == pytest.approx(20.0)


def test_pedal_cap():
    assert pedal_feedback(-4.0, 1.0) == pytest.approx(40.0)


# --- fuel -------------------------------------------------------------------


def test_fuel_idle():
    assert fuel_rate(0.0, 0.0, 1500.0) == pytest.approx(0.15)


def test_fuel_braking_costs_idle_only():
    assert fuel_rate(10.0, -3.0, 1500.0) == pytest.approx(0.15)


def test_fuel_cruise_matches_hand_evaluation():
    # hand-evaluated power expression
    v, m = 13.89, 1500.0
    drag = 0.5 * 1.2 * 0.62 * 2.0 * v * v
    rolling = 0.011 * m * 9.81
    expect = 0.15 + (drag + rolling) * v / (0.30 * 43000.0)
    assert fuel_rate(v, 0.0, m) == pytest.approx(expect, rel=1e-12)


def test_fuel_monotonic():
    for v in (0.0, 5.0, 10.0, 13.89):
        rates = [fuel_rate(v, a, 1500.0) for a in (-2.0, 0.0, 0.5, 1.0, 2.0)]
        assert rates == sorted(rates)
    for a in (0.0, 0.5, 1.0):
        rates = [fuel_rate(v, a, 1500.0) for v in (0.0, 3.0, 8.0, 13.89)]
        assert rates == sorted(rates)


def test_fuel_accumulates():
    st = FuelState()
    st = update_fuel(st, 10.0, 0.0, 1500.0, 1.0)
    assert st.cumulative == pytest.approx(st.rate)


# --- eco advice -------------------------------------------------------------


def test_eco_uniform_limit():
    road = RoadMap([seg(length=500.0, limit=13.89)])
    nodes = eco_speed_advice(road, 10.0)
    assert all(v == pytest.approx(13.89) for _, v in nodes)


def test_eco_decays_before_limit_drop():
    # coast-distance oracle: (13.89^2 - 8.33^2) / (2*0.4) = 154 m, so with the
    # drop 100 m out the advice is already below the current limit
    road = RoadMap([seg(length=100.0, limit=13.89),
                    seg(sid=1, length=400.0, limit=8.33)])
    v0 = eco_target(road, 0.0)
    expect = math.sqrt(8.33**2 + 2 * 0.4 * 100.0)
    assert v0 == pytest.approx(expect, abs=1e-6)
    assert v0 < 13.89


def test_eco_stop_target():
    road = RoadMap([seg(length=500.0, limit=13.89)])
    v0 = eco_target(road, 0.0, stop_at=24.0)
    assert v0 == pytest.approx(math.sqrt(2 * 0.4 * 24.0), abs=1e-6)


def test_eco_never_exceeds_limit():
    road = RoadMap([seg(length=80.0, limit=13.89),
                    seg(sid=1, length=60.0, limit=8.33),
                    seg(sid=2, length=300.0, limit=11.11)])
    for s in np.linspace(0.0, 200.0, 41):
        for x, v in eco_speed_advice(road, float(s)):
            if x <= road.total_length:
                seg_, _ = road.segment_at(min(x, road.total_length - 1e-6))
                assert v <= seg_.speed_limit + 1e-9
