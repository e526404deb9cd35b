"""Motion-vector controllers, shared steering torque and the fuel model.

The lateral controller turns the active trajectory into a front-wheel angle
(curvature feedforward plus error feedback); the by-wire column is a
velocity source driven by torque, so the automation's angle demand becomes
an assist torque that blends additively with whatever the driver applies.
A sustained opposing driver torque latches an override that ramps the
assist authority down to a small residual.
"""

import math
from dataclasses import dataclass
from typing import Optional

from .config import ControlParams, VehicleParams
from .modes import DriverInput
from .planner import Trajectory
from .road import RoadMap, VehicleState, curvature_at


def _clip(x, lo, hi):
    return min(max(x, lo), hi)


def lateral_control(
    ego: VehicleState,
    traj: Trajectory,
    t_on_traj: float,
    road: RoadMap,
    cp: ControlParams = None,
    vp: VehicleParams = None,
) -> float:
    """Front-wheel angle: curvature feedforward + lateral/heading feedback.

    The reference is read a short preview ahead on the trajectory; with
    replanning re-anchoring each plan at the measured state, the preview is
    what turns the quintic's upcoming correction into a present steering
    command.
    """
    c = cp or _CP
    v = vp or _VP
    t_ref = t_on_traj + c.preview_s
    d_ref = traj.d_at(t_ref)
    d_dot_ref = traj.d_dot_at(t_ref)
    d_ddot_ref = traj.d_ddot_at(t_ref)
    v_ref = max(traj.v_at(t_on_traj), 0.5)

    kappa_path = curvature_at(ego.s, road) + d_ddot_ref / v_ref**2
    feedforward = math.atan(v.wheelbase * kappa_path)

    e_d = ego.d - d_ref
    e_psi = ego.heading_err - math.atan2(d_dot_ref, v_ref)
    steer = feedforward - c.k_d * e_d - c.k_psi * e_psi
    return _clip(steer, -v.steer_max, v.steer_max)


def longitudinal_control(
    ego: VehicleState,
    traj: Optional[Trajectory],
    t_on_traj: float,
    lead: Optional[tuple],
    cp: ControlParams = None,
    vp: VehicleParams = None,
    v_ref: Optional[float] = None,
) -> float:
    """Longitudinal acceleration: speed tracking bounded by the gap law.

    lead: (gap_m, lead_speed) bumper gap to the relevant front object, or
    None.  Either a trajectory or an explicit v_ref provides the speed
    target; the trajectory also contributes its profile acceleration as
    feedforward.
    """
    c = cp or _CP
    v = vp or _VP
    if traj is not None:
        target = traj.v_at(t_on_traj)
        feedforward = traj.a_at(t_on_traj)
    else:
        target = v_ref if v_ref is not None else ego.v
        feedforward = 0.0
    accel = feedforward + c.k_v * (target - ego.v)
    if lead is not None:
        gap, v_lead = lead
        desired = c.ctg_standstill + c.ctg_time_gap * ego.v
        a_gap = c.ctg_gap_gain * (gap - desired) + c.ctg_speed_gain * (v_lead - ego.v)
        accel = min(accel, a_gap)
        # kinematic stop guard: when closing fast enough that coasting past
        # the standstill gap is inevitable, brake at the required rate now
        closing = ego.v - v_lead
        room = gap - c.ctg_standstill
        if closing > 0.0 and room > 0.05:
            a_need = closing * closing / (2.0 * room)
            if a_need >= c.stop_guard_accel:
                accel = min(accel, -a_need)
        elif closing > 0.0:
            accel = min(accel, v.accel_min)
    return _clip(accel, v.accel_min, v.accel_max)


@dataclass(frozen=True)
class SharedControlState:
    assist_torque: float = 0.0     # N*m, after authority scaling
    driver_torque: float = 0.0     # N*m
    applied_torque: float = 0.0    # N*m, what the column sees
    override_active: bool = False
    override_timer: float = 0.0    # s of sustained opposing torque
    pedal_feedback: float = 0.0    # N, advisory resistance
    authority: float = 1.0         # assist scale, ramps 1 <-> floor
    clear_timer: float = 0.0       # s of quiet hands while overridden


def shared_torque(
    assist_cmd: float,
    driver: DriverInput,
    state: SharedControlState,
    dt: float,
    cp: ControlParams = None,
) -> SharedControlState:
    """Blend assist and driver torque; detect and latch overrides.

    The override timer runs while the driver pushes hard against the assist
    (or against a near-idle assist); once latched, authority ramps down to a
    small residual and recovers only after a quiet period.
    """
    c = cp or _CP
    assist_sat = _clip(assist_cmd, -c.assist_torque_max, c.assist_torque_max)
    dtq = driver.steer_torque

    opposing = abs(dtq) > c.override_torque and (
        dtq * assist_sat <= 0.0 or abs(assist_sat) < c.assist_dead_zone
    )
    timer = state.override_timer + dt if opposing else 0.0

    override = state.override_active
    clear_timer = state.clear_timer
    if not override and timer > c.override_latch_s:
        override = True
        clear_timer = 0.0
    if override:
        if abs(dtq) < c.override_clear_torque:
            clear_timer += dt
            if clear_timer >= c.override_clear_s:
                override = False
                clear_timer = 0.0
        else:
            clear_timer = 0.0

    ramp = dt * (1.0 - c.override_floor) / c.override_ramp_s
    authority = state.authority - ramp if override else state.authority + ramp
    authority = _clip(authority, c.override_floor, 1.0)

    assist = assist_sat * authority
    return SharedControlState(
        assist_torque=assist,
        driver_torque=dtq,
        applied_torque=assist + dtq,
        override_active=override,
        override_timer=timer,
        pedal_feedback=state.pedal_feedback,
        authority=authority,
        clear_timer=clear_timer,
    )


def steer_angle_to_torque(angle_err: float, cp: ControlParams = None) -> float:
    """Map the wheel-angle error to an assist torque demand (saturated)."""
    c = cp or _CP
    return _clip(c.torque_per_rad * angle_err, -c.assist_torque_max, c.assist_torque_max)


def column_rate(applied_torque: float, cp: ControlParams = None) -> float:
    """By-wire column modeled as a velocity source: rad/s per applied N*m."""
    c = cp or _CP
    return c.column_rate_per_torque * applied_torque


def pedal_feedback(recommended_accel: float, driver_throttle: float,
                   cp: ControlParams = None, vp: VehicleParams = None) -> float:
    """Advisory pedal resistance when the driver demands more than advised."""
    c = cp or _CP
    v = vp or _VP
    demanded = driver_throttle * v.accel_max
    excess = max(0.0, demanded - recommended_accel)
    return min(c.pedal_cap, c.pedal_gain * excess / 2.0)


@dataclass(frozen=True)
class FuelState:
    rate: float = 0.0        # g/s
    cumulative: float = 0.0  # g


def fuel_rate(v: float, a: float, mass: float, cp: ControlParams = None) -> float:
    """Fuel flow from tractive power: drive power over efficiency times
    heating value, plus idle; braking adds nothing."""
    c = cp or _CP
    drag = 0.5 * c.air_density * c.drag_coeff * c.frontal_area * v * v
    rolling = c.rolling_coeff * mass * 9.81
    power = max(0.0, (mass * a + drag + rolling) * v)
    return c.idle_rate + power / (c.engine_eff * c.fuel_lhv)


def update_fuel(state: FuelState, v: float, a: float, mass: float, dt: float,
                cp: ControlParams = None) -> FuelState:
    rate = fuel_rate(v, max(a, 0.0) if v > 0 else 0.0, mass, cp)
    return FuelState(rate=rate, cumulative=state.cumulative + rate * dt)


def eco_speed_advice(road: RoadMap, s: float, cp: ControlParams = None,
                     stop_at: Optional[float] = None, step: float = 5.0):
    """Coast-down speed profile over the lookahead: (s, v_ref) nodes.

    v_ref decays toward each upcoming lower limit (or a stop) along
    sqrt(v_next^2 + 2 * d_coast * distance), and never exceeds the local
    statutory limit.
    """
    c = cp or _CP
    horizon = c.eco_lookahead
    events = []  # (s_change, v_next)
    seg, u = road.segment_at(road.wrap_s(s))
    idx, _ = road.segment_index_at(road.wrap_s(s))
    pos = road.wrap_s(s) - u  # segment start
    cur_limit = seg.speed_limit
    scan = pos + seg.length
    j = idx
    travelled = seg.length - u
    while travelled < horizon:
        j += 1
        if j >= len(road.segments):
            if not road.closed:
                break
            j = 0
        nxt = road.segments[j]
        if nxt.speed_limit < cur_limit:
            events.append((s + travelled, nxt.speed_limit))
        cur_limit = nxt.speed_limit
        travelled += nxt.length
    if stop_at is not None and 0.0 <= stop_at - s <= horizon:
        events.append((stop_at, 0.0))

    nodes = []
    x = s
    while x <= s + horizon + 1e-9:
        local = _statutory_at(road, x)
        v_ref = local
        for s_change, v_next in events:
            if x <= s_change:
                v_ref = min(v_ref, math.sqrt(v_next**2 + 2.0 * c.coast_decel * (s_change - x)))
        nodes.append((x, min(v_ref, local)))
        x += step
    return nodes


def eco_target(road: RoadMap, s: float, cp: ControlParams = None,
               stop_at: Optional[float] = None) -> float:
    """Advisory speed target at the current position (direct evaluation)."""
    c = cp or _CP
    v_ref = _statutory_at(road, s)
    seg, u = road.segment_at(road.wrap_s(s))
    idx, _ = road.segment_index_at(road.wrap_s(s))
    cur_limit = seg.speed_limit
    travelled = seg.length - u
    j = idx
    while travelled < c.eco_lookahead:
        j += 1
        if j >= len(road.segments):
            if not road.closed:
                break
            j = 0
        nxt = road.segments[j]
        if nxt.speed_limit < cur_limit:
            v_ref = min(v_ref, math.sqrt(nxt.speed_limit**2
                                         + 2.0 * c.coast_decel * travelled))
        cur_limit = nxt.speed_limit
        travelled += nxt.length
    if stop_at is not None and 0.0 <= stop_at - s <= c.eco_lookahead:
        v_ref = min(v_ref, math.sqrt(2.0 * c.coast_decel * (stop_at - s)))
    return v_ref


def _statutory_at(road: RoadMap, s: float) -> float:
    s = road.wrap_s(s) if road.closed else _clip(s, 0.0, road.total_length)
    seg, _ = road.segment_at(s)
    return seg.speed_limit


_CP = ControlParams()
_VP = VehicleParams()
