"""Road network model, Frenet<->global conversion and vehicle kinematics.

A road is an ordered chain of constant-curvature segments.  The reference
line is the center of lane 0; lateral offset d is positive to the left, so
lane i is centered at i * lane_width and an emergency lane, when present,
sits at -lane_width.  All functions here are pure: same inputs, bit-identical
outputs.
"""

import math
from dataclasses import dataclass

from .config import VehicleParams

TWO_PI = 2.0 * math.pi


class SimulationIntegrityError(RuntimeError):
    """Non-finite state or command reached the integrator."""


class OutOfCorridorError(ValueError):
    """Point too far from the road to express in Frenet coordinates."""


def wrap_angle(a: float) -> float:
    return (a + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class RoadSegment:
    id: int
    length: float            # m
    curvature: float         # 1/m, signed, + turns left
    lane_count: int
    lane_width: float        # m
    speed_limit: float       # m/s
    secured: bool
    has_emergency_lane: bool
    marking_quality: float   # [0, 1], drives lane-sensing dropout
    instrumented: bool = False   # road-side counters see conventional traffic here

    def invariant_errors(self) -> list:
        errs = []
        if not self.length > 0:
            errs.append(f"segment {self.id}: length must be > 0, got {self.length}")
        if self.lane_count < 1:
            errs.append(f"segment {self.id}: lane_count must be >= 1, got {self.lane_count}")
        if not self.lane_width > 0:
            errs.append(f"segment {self.id}: lane_width must be > 0, got {self.lane_width}")
        if not self.speed_limit > 0:
            errs.append(f"segment {self.id}: speed_limit must be > 0, got {self.speed_limit}")
        if not 0.0 <= self.marking_quality <= 1.0:
            errs.append(f"segment {self.id}: marking_quality must be in [0,1], got {self.marking_quality}")
        if abs(self.curvature) * self.lane_count * self.lane_width >= 1.0:
            errs.append(f"segment {self.id}: |curvature|*lane_count*lane_width must be < 1 (lanes self-intersect)")
        return errs


class RoadMap:
    """Chained segments; segment k starts where segment k-1 ends."""

    def __init__(self, segments, closed: bool = False):
        if not segments:
            raise ValueError("road map needs at least one segment")
        self.segments = tuple(segments)
        self.closed = bool(closed)
        starts = [0.0]
        poses = [(0.0, 0.0, 0.0)]  # (x, y, psi) of each segment's reference start
        x, y, psi = 0.0, 0.0, 0.0
        for seg in self.segments:
            x, y, psi = _advance_pose(x, y, psi, seg.curvature, seg.length)
            starts.append(starts[-1] + seg.length)
            poses.append((x, y, psi))
        self._starts = tuple(starts)
        self._poses = tuple(poses)
        self.total_length = starts[-1]

    def invariant_errors(self) -> list:
        errs = []
        for seg in self.segments:
            errs.extend(seg.invariant_errors())
        if not self.total_length > 0:
            errs.append("map: total length must be > 0")
        return errs

    def wrap_s(self, s: float) -> float:
        if self.closed:
            return s % self.total_length
        return s

    def delta_s(self, s_to: float, s_from: float) -> float:
        """Signed arc distance from s_from to s_to, shortest way on a ring."""
        d = s_to - s_from
        if self.closed:
            half = self.total_length / 2.0
            d = (d + half) % self.total_length - half
        return d

    def segment_index_at(self, s: float):
        """(index, local arc length); boundaries are left-closed."""
        s = self.wrap_s(s)
        if s < 0.0 or s > self.total_length:
            raise OutOfCorridorError(f"s={s} outside open map [0, {self.total_length}]")
        if s == self.total_length:  # open-map end point belongs to the last segment
            return len(self.segments) - 1, self.segments[-1].length
        lo, hi = 0, len(self.segments) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if s < self._starts[mid + 1]:
                hi = mid
            else:
                lo = mid + 1
        return lo, s - self._starts[lo]

    def segment_at(self, s: float):
        idx, u = self.segment_index_at(s)
        return self.segments[idx], u

    def ref_pose(self, s: float):
        """(x, y, psi) of the reference line at arc length s."""
        idx, u = self.segment_index_at(s)
        seg = self.segments[idx]
        x0, y0, psi0 = self._poses[idx]
        return _advance_pose(x0, y0, psi0, seg.curvature, u)


def _advance_pose(x: float, y: float, psi: float, curvature: float, u: float):
    if abs(curvature) < 1e-12:
        return x + u * math.cos(psi), y + u * math.sin(psi), psi
    psi1 = psi + curvature * u
    x1 = x + (math.sin(psi1) - math.sin(psi)) / curvature
    y1 = y - (math.cos(psi1) - math.cos(psi)) / curvature
    return x1, y1, psi1


def curvature_at(s: float, road: RoadMap) -> float:
    seg, _ = road.segment_at(s)
    return seg.curvature


def speed_limit_at(s: float, road: RoadMap) -> float:
    seg, _ = road.segment_at(s)
    return seg.speed_limit


def frenet_to_global(s: float, d: float, heading_err: float, road: RoadMap):
    """(x, y, psi) of a point at (s, d) with heading offset from the road tangent."""
    x, y, psi = road.ref_pose(s)
    x += -math.sin(psi) * d
    y += math.cos(psi) * d
    return x, y, wrap_angle(psi + heading_err)


def global_to_frenet(x: float, y: float, psi: float, road: RoadMap):
    """Project a global pose onto the road; inverse of frenet_to_global.

    The point must lie within lane_count*lane_width + 5 m of the reference
    line of some segment; otherwise OutOfCorridorError.
    """
    best = None
    tol = 1e-6
    for idx, seg in enumerate(road.segments):
        x0, y0, psi0 = road._poses[idx]
        cand = _project_on_segment(x, y, x0, y0, psi0, seg.curvature, seg.length, tol)
        if cand is None:
            continue
        s_local, d = cand
        corridor = seg.lane_count * seg.lane_width + 5.0
        if abs(d) > corridor:
            continue
        if best is None or abs(d) < abs(best[1]):
            best = (road._starts[idx] + s_local, d, idx)
    if best is None:
        raise OutOfCorridorError(f"point ({x:.2f}, {y:.2f}) is not on the road corridor")
    s, d, idx = best
    s = min(s, road.total_length)
    _, _, psi_ref = road.ref_pose(road.wrap_s(s) if road.closed else s)
    return road.wrap_s(s), d, wrap_angle(psi - psi_ref)


def _project_on_segment(x, y, x0, y0, psi0, curvature, length, tol):
    if abs(curvature) < 1e-12:
        dx, dy = x - x0, y - y0
        tx, ty = math.cos(psi0), math.sin(psi0)
        s_local = dx * tx + dy * ty
        if s_local < -tol or s_local > length + tol:
            return None
        d = -math.sin(psi0) * dx + math.cos(psi0) * dy
        return min(max(s_local, 0.0), length), d
    # circular arc: the center sits 1/curvature along the left normal
    inv = 1.0 / curvature
    cx = x0 - math.sin(psi0) * inv
    cy = y0 + math.cos(psi0) * inv
    rx, ry = x - cx, y - cy
    r = math.hypot(rx, ry)
    if r < 1e-9:
        return None
    sign = 1.0 if curvature > 0 else -1.0
    # normal at the projection: n = -sign * (P - C)/|P - C|
    nx, ny = -sign * rx / r, -sign * ry / r
    psi_s = math.atan2(-nx, ny)
    dpsi = wrap_angle(psi_s - psi0)
    s_local = dpsi / curvature
    if s_local < -tol:
        alt = dpsi + (TWO_PI if curvature > 0 else -TWO_PI)
        s_local = alt / curvature
    if s_local < -tol or s_local > length + tol:
        return None
    d = inv - sign * r
    return min(max(s_local, 0.0), length), d


@dataclass(frozen=True)
class VehicleState:
    s: float                 # m, arc length along the road
    d: float                 # m, lateral offset from the reference lane center
    heading_err: float       # rad, heading minus road tangent
    v: float                 # m/s
    a: float = 0.0           # m/s^2, realized longitudinal acceleration
    lane: int = 0
    steer: float = 0.0       # rad, front-wheel angle

    def is_finite(self) -> bool:
        return all(
            math.isfinite(val)
            for val in (self.s, self.d, self.heading_err, self.v, self.a, self.steer)
        )


@dataclass(frozen=True)
class Command:
    steer: float             # rad, commanded front-wheel angle
    accel: float             # m/s^2, commanded longitudinal acceleration


def lane_center(lane: int, lane_width: float) -> float:
    return lane * lane_width


def lane_of(d: float, seg: RoadSegment) -> int:
    lane = int(round(d / seg.lane_width))
    return min(max(lane, 0), seg.lane_count - 1)


def step_vehicle(
    state: VehicleState,
    cmd: Command,
    dt: float,
    road: RoadMap,
    params: VehicleParams = None,
) -> VehicleState:
    """One fixed-step integration of the kinematic bicycle in road coordinates.

    Actuators are saturated and rate-limited here (steering slew, jerk), speed
    is clamped at zero, and s wraps on ring roads.  Pure function.
    """
    p = params or _DEFAULT_VEHICLE
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not state.is_finite() or not (math.isfinite(cmd.steer) and math.isfinite(cmd.accel)):
        raise SimulationIntegrityError(f"non-finite state or command: {state}, {cmd}")

    steer_cmd = min(max(cmd.steer, -p.steer_max), p.steer_max)
    accel_cmd = min(max(cmd.accel, p.accel_min), p.accel_max)

    max_slew = p.steer_rate_max * dt
    steer = state.steer + min(max(steer_cmd - state.steer, -max_slew), max_slew)
    max_da = p.jerk_max * dt
    a = state.a + min(max(accel_cmd - state.a, -max_da), max_da)

    v_new = max(0.0, state.v + a * dt)
    v_mid = 0.5 * (state.v + v_new)  # trapezoidal advance, exact for constant a

    kappa = curvature_at(state.s, road)
    denom = 1.0 - state.d * kappa
    if denom < 0.05:
        raise SimulationIntegrityError(
            f"state d={state.d} too close to curvature center (kappa={kappa})"
        )
    s_dot = v_mid * math.cos(state.heading_err) / denom
    d_dot = v_mid * math.sin(state.heading_err)
    psi_dot = v_mid * math.tan(steer) / p.wheelbase
    he_dot = psi_dot - kappa * s_dot

    s_new = state.s + s_dot * dt
    if road.closed:
        s_new %= road.total_length
    elif s_new >= road.total_length:
        s_new = road.total_length
        v_new = 0.0
    elif s_new < 0.0:
        s_new = 0.0
    d_new = state.d + d_dot * dt
    he_new = wrap_angle(state.heading_err + he_dot * dt)

    seg, _ = road.segment_at(s_new)
    return VehicleState(
        s=s_new,
        d=d_new,
        heading_err=he_new,
        v=v_new,
        a=a,
        lane=lane_of(d_new, seg),
        steer=steer,
    )


_DEFAULT_VEHICLE = VehicleParams()


def road_bounds(seg: RoadSegment, include_emergency: bool = False):
    """(d_min, d_max) of the drivable surface on a segment."""
    d_min = -0.5 * seg.lane_width
    if include_emergency and seg.has_emergency_lane:
        d_min = -1.5 * seg.lane_width
    d_max = (seg.lane_count - 0.5) * seg.lane_width
    return d_min, d_max
