import math

import numpy as np
import pytest

from lowspeed.config import VehicleParams
from lowspeed.road import (
    Command,
    OutOfCorridorError,
    RoadMap,
    RoadSegment,
    SimulationIntegrityError,
    VehicleState,
    curvature_at,
    frenet_to_global,
    global_to_frenet,
    step_vehicle,
)


def seg(sid=0, length=500.0, curvature=0.0, lanes=2, width=3.5, limit=13.89,
        secured=True, emergency=True, quality=1.0):
    return RoadSegment(
        id=sid, length=length, curvature=curvature, lane_count=lanes,
        lane_width=width, speed_limit=limit, secured=secured,
        has_emergency_lane=emergency, marking_quality=quality,
    )


def straight_map(length=500.0):
    return RoadMap([seg(length=length)])


def test_straight_step_advances_exactly():
    road = straight_map()
    state = VehicleState(s=5.0, d=0.3, heading_err=0.0, v=10.0, a=0.0, lane=0, steer=0.0)
    out = step_vehicle(state, Command(steer=0.0, accel=0.0), 0.02, road)
    assert out.s == pytest.approx(5.2, abs=1e-12)
    assert out.d == state.d
    assert out.heading_err == 0.0
    assert out.v == 10.0


def test_no_reverse_at_standstill():
    road = straight_map()
    state = VehicleState(s=0.0, d=0.0, heading_err=0.0, v=0.0, a=-4.0, lane=0, steer=0.0)
    out = step_vehicle(state, Command(steer=0.0, accel=-4.0), 0.02, road)
    assert out.v == 0.0


def brake_to_stop(dt):
    """Distance to stop from 13.89 m/s at a constant realized -4 m/s^2."""
    road = straight_map()
    state = VehicleState(s=0.0, d=0.0, heading_err=0.0, v=13.89, a=-4.0, lane=0, steer=0.0)
    cmd = Command(steer=0.0, accel=-4.0)
    while state.v > 0.0:
        state = step_vehicle(state, cmd, dt, road)
    return state.s


def test_braking_distance_matches_closed_form():
    # independent oracle: v^2 / (2a)
    expected = 13.89**2 / (2.0 * 4.0)
    assert brake_to_stop(0.02) == pytest.approx(expected, abs=0.05)
    assert expected == pytest.approx(24.11, abs=0.05)


def test_integrator_converges_when_halving_dt():
    d1 = brake_to_stop(0.02)
    d2 = brake_to_stop(0.01)
    assert abs(d1 - d2) / d2 < 0.01


def test_step_is_pure():
    road = straight_map()
    state = VehicleState(s=12.0, d=-0.4, heading_err=0.05, v=9.0, a=0.5, lane=0, steer=0.02)
    cmd = Command(steer=0.1, accel=1.0)
    a = step_vehicle(state, cmd, 0.02, road)
    b = step_vehicle(state, cmd, 0.02, road)
    assert a == b


def test_speed_never_negative_under_any_command():
    road = straight_map()
    rng = np.random.default_rng(7)
    state = VehicleState(s=0.0, d=0.0, heading_err=0.0, v=1.0, a=0.0, lane=0, steer=0.0)
    for _ in range(500):
        cmd = Command(steer=rng.uniform(-1, 1), accel=rng.uniform(-10, 4))
        state = step_vehicle(state, cmd, 0.02, road)
        assert state.v >= 0.0


def test_non_finite_rejected():
    road = straight_map()
    state = VehicleState(s=float("nan"), d=0.0, heading_err=0.0, v=1.0)
    with pytest.raises(SimulationIntegrityError):
        step_vehicle(state, Command(0.0, 0.0), 0.02, road)
    ok = VehicleState(s=0.0, d=0.0, heading_err=0.0, v=1.0)
    with pytest.raises(SimulationIntegrityError):
        step_vehicle(ok, Command(float("inf"), 0.0), 0.02, road)


def test_actuator_saturation():
    p = VehicleParams()
    road = straight_map()
    out = VehicleState(s=0.0, d=0.0, heading_err=0.0, v=10.0, a=0.0, lane=0, steer=0.0)
    for _ in range(40):  # slew reaches both limits well within 0.8 s
        out = step_vehicle(out, Command(steer=2.0, accel=9.0), 0.02, road, p)
    assert out.steer == pytest.approx(p.steer_max)
    assert out.a == pytest.approx(p.accel_max)


def test_steer_slew_and_jerk_limits():
    p = VehicleParams()
    road = straight_map()
    state = VehicleState(s=0.0, d=0.0, heading_err=0.0, v=10.0, a=0.0, lane=0, steer=0.0)
    out = step_vehicle(state, Command(steer=0.5, accel=2.0), 0.02, road, p)
    assert out.steer == pytest.approx(p.steer_rate_max * 0.02)
    assert out.a == pytest.approx(p.jerk_max * 0.02)


# --- Frenet <-> global ---------------------------------------------------


def test_straight_frenet_trivial():
    road = straight_map()
    s, d, he = global_to_frenet(10.0, 0.5, 0.0, road)
    assert s == pytest.approx(10.0, abs=1e-9)
    assert d == pytest.approx(0.5, abs=1e-9)
    assert he == pytest.approx(0.0, abs=1e-9)


def test_round_trip_single_point():
    road = RoadMap([seg(length=50.0), seg(sid=1, length=100.0, curvature=0.01)])
    x, y, psi = frenet_to_global(37.2, -1.1, 0.07, road)
    s, d, he = global_to_frenet(x, y, psi, road)
    assert s == pytest.approx(37.2, abs=1e-6)
    assert d == pytest.approx(-1.1, abs=1e-6)
    assert he == pytest.approx(0.07, abs=1e-9)


def test_arc_geometry_oracle():
    # circular-geometry oracle: on a curvature-0.01 arc, the centerline point
    # at arc angle 0.3 rad lies at s = 0.3 / 0.01 = 30 m
    road = RoadMap([seg(length=200.0, curvature=0.01)])
    r = 100.0
    theta = 0.3
    cx, cy = 0.0, r  # arc starts at origin heading +x, center on the left
    x = cx + r * math.sin(theta)
    y = cy - r * math.cos(theta)
    s, d, he = global_to_frenet(x, y, theta, road)
    assert s == pytest.approx(30.0, abs=1e-6)
    assert d == pytest.approx(0.0, abs=1e-6)
    assert he == pytest.approx(0.0, abs=1e-9)


def random_map(rng):
    # keep the cumulative heading change small so the road cannot loop back
    # near itself, which would make the Frenet inverse ambiguous
    segs = []
    cum_turn = 0.0
    for i in range(rng.integers(1, 6)):
        length = float(rng.uniform(40.0, 300.0))
        curv = float(rng.uniform(-0.02, 0.02))
        if rng.random() < 0.3:
            curv = 0.0
        if abs(cum_turn + curv * length) > 0.7:
            curv = -curv
            if abs(cum_turn + curv * length) > 0.7:
                curv = 0.0
        cum_turn += curv * length
        segs.append(seg(sid=i, length=length, curvature=curv,
                        lanes=int(rng.integers(1, 4))))
    return RoadMap(segs)


def test_round_trip_random_points():
    rng = np.random.default_rng(1234)
    checked = 0
    for _ in range(100):
        road = random_map(rng)
        for _ in range(100):
            s = float(rng.uniform(0.0, road.total_length))
            seg_, _ = road.segment_at(s)
            d = float(rng.uniform(-0.5 * seg_.lane_width,
                                  (seg_.lane_count - 0.5) * seg_.lane_width))
            he = float(rng.uniform(-0.3, 0.3))
            x, y, psi = frenet_to_global(s, d, he, road)
            s2, d2, he2 = global_to_frenet(x, y, psi, road)
            assert abs(s2 - s) < 1e-6
            assert abs(d2 - d) < 1e-6
            assert abs(he2 - he) < 1e-9
            checked += 1
    assert checked == 10_000


def test_out_of_corridor_raises():
    road = straight_map()
    with pytest.raises(OutOfCorridorError):
        global_to_frenet(10.0, 50.0, 0.0, road)


# --- curvature_at --------------------------------------------------------


def test_curvature_lookup():
    road = RoadMap([seg(length=100.0, curvature=0.0),
                    seg(sid=1, length=100.0, curvature=0.015)])
    assert curvature_at(50.0, road) == 0.0
    assert curvature_at(150.0, road) == 0.015
    # left-closed boundary: s=100 belongs to the second segment
    assert curvature_at(100.0, road) == 0.015
    assert curvature_at(0.0, road) == 0.0


def test_curvature_wraps_on_ring():
    road = RoadMap([seg(length=100.0, curvature=0.005),
                    seg(sid=1, length=100.0, curvature=-0.005)], closed=True)
    assert curvature_at(road.total_length + 5.0, road) == curvature_at(5.0, road)


def test_curvature_out_of_range_on_open_map():
    road = straight_map(100.0)
    with pytest.raises(OutOfCorridorError):
        curvature_at(150.0, road)


def test_ring_wraps_s():
    road = RoadMap([seg(length=100.0)], closed=True)
    state = VehicleState(s=99.9, d=0.0, heading_err=0.0, v=10.0, a=0.0, lane=0, steer=0.0)
    out = step_vehicle(state, Command(0.0, 0.0), 0.02, road)
    assert out.s == pytest.approx(0.1, abs=1e-9)


def test_segment_invariants_reported():
    bad = RoadSegment(id=0, length=-5.0, curvature=0.2, lane_count=3, lane_width=3.5,
                      speed_limit=0.0, secured=False, has_emergency_lane=False,
                      marking_quality=2.0)
    errs = bad.invariant_errors()
    joined = "\n".join(errs)
    assert "length" in joined
    assert "speed_limit" in joined
    assert "marking_quality" in joined
    assert "self-intersect" in joined
