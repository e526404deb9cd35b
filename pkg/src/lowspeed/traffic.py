"""Conventional-vehicle car following and the road-side supervisor.

Conventional vehicles follow the Intelligent Driver Model and keep their
lane (lane changes are off by default so the planner's lane-keeping
prediction of other traffic stays honest).  The supervisor aggregates
per-segment densities from vehicle reports and road-side counters and
broadcasts temporary speed recommendations that automated vehicles adopt
as their effective limit.
"""

import math
from dataclasses import dataclass, field

from .config import TrafficParams, VehicleParams
from .road import RoadMap, VehicleState

# conventional cars are not behind the by-wire actuator: brakes bite fast and
# the car-following law may use its full floor
CONVENTIONAL_VEHICLE = VehicleParams(accel_min=-8.0, jerk_max=40.0)


@dataclass
class IdmParams:
    a_max: float = 1.0      # m/s^2
    b_comf: float = 1.5     # m/s^2
    s0: float = 2.0         # m
    t_gap: float = 1.5      # s
    delta: float = 4.0
    floor: float = -8.0     # m/s^2


@dataclass
class ConventionalVehicle:
    state: VehicleState
    desired_speed: float
    idm: IdmParams = field(default_factory=IdmParams)


def idm_accel(v: float, v_lead: float, gap: float, params: IdmParams,
              v_desired: float) -> float:
    """Intelligent-Driver-Model acceleration, clamped to [floor, a_max].

    gap is bumper to bumper; gap <= 0 means the caller has a collision on its
    hands and gets the floor.
    """
    p = params
    if gap <= 0.0:
        return p.floor
    dv = v - v_lead
    s_star = p.s0 + max(0.0, v * p.t_gap + v * dv / (2.0 * math.sqrt(p.a_max * p.b_comf)))
    free = (v / v_desired) ** p.delta if v_desired > 0 else 1.0
    accel = p.a_max * (1.0 - free - (s_star / gap) ** 2)
    return min(max(accel, p.floor), p.a_max)


@dataclass(frozen=True)
class Recommendation:
    segment_id: int
    advised_limit: float    # m/s, <= statutory
    issued_at: float
    ttl: float


class Supervisor:
    """Per-segment density watcher issuing temporary speed recommendations.

    Automated vehicles always report; conventional vehicles are only seen by
    road-side counters on instrumented segments.  A recommendation is
    refreshed while its trigger holds and lifts when its ttl runs out.
    """

    def __init__(self, params: TrafficParams = None):
        self.p = params or _DEFAULTS
        self.active = {}            # segment_id -> Recommendation
        self.log = []               # every issued recommendation, audit trail

    def step(self, reports, road: RoadMap, t: float):
        """reports: iterable of (vehicle_id, segment_id, v).  Returns the
        live recommendation list, sorted by segment."""
        counts = {}
        for _vid, seg_id, _v in reports:
            counts[seg_id] = counts.get(seg_id, 0) + 1

        for seg in road.segments:
            n = counts.get(seg.id, 0)
            density = n / (seg.length / 1000.0) / seg.lane_count
            advised = None
            if density > self.p.density_jam:
                advised = self.p.advise_jam
            elif density > self.p.density_slow:
                advised = self.p.advise_slow
            if advised is not None:
                advised = min(advised, seg.speed_limit)
                rec = Recommendation(segment_id=seg.id, advised_limit=advised,
                                     issued_at=t, ttl=self.p.rec_ttl_s)
                prev = self.active.get(seg.id)
                if prev is None or prev.advised_limit != advised:
                    self.log.append(rec)
                self.active[seg.id] = rec

        expired = [sid for sid, rec in self.active.items()
                   if t - rec.issued_at >= rec.ttl]
        for sid in expired:
            del self.active[sid]
        return sorted(self.active.values(), key=lambda r: r.segment_id)

    def advised_limit_for(self, seg_id: int):
        rec = self.active.get(seg_id)
        return rec.advised_limit if rec is not None else None


@dataclass(frozen=True)
class SpawnedVehicle:
    automated: bool
    state: VehicleState
    desired_speed: float


class SpawnError(ValueError):
    """Requested density does not fit on the road."""


def spawn_traffic(
    road: RoadMap,
    count: int,
    penetration: float,
    rng,
    params: TrafficParams = None,
    vehicle_length: float = 4.5,
    lanes: int = None,
) -> list:
    """Evenly spaced fleet with jitter, IDM-stable initial gaps.

    Each vehicle is automated with probability ``penetration``.  Initial
    speeds are chosen from the spacing so the first steps do not force
    emergency braking.
    """
    p = params or _DEFAULTS
    if not 0.0 <= penetration <= 1.0:
        raise ValueError(f"penetration must be in [0,1], got {penetration}")
    if count <= 0:
        return []
    seg0 = road.segments[0]
    lane_count = lanes or min(s.lane_count for s in road.segments)
    per_lane = [count // lane_count + (1 if i < count % lane_count else 0)
                for i in range(lane_count)]
    out = []
    for lane, n_lane in enumerate(per_lane):
        if n_lane == 0:
            continue
        spacing = road.total_length / n_lane
        if spacing < p.idm_s0 + vehicle_length + 1.0:
            raise SpawnError(
                f"{count} vehicles on {road.total_length:.0f} m "
                f"({spacing:.1f} m spacing) cannot keep the standstill gap")
        for i in range(n_lane):
            s = (i * spacing + float(rng.uniform(0.0, 0.25 * spacing))) % road.total_length
            seg, _ = road.segment_at(s)
            limit = seg.speed_limit
            gap = spacing - vehicle_length
            v_stable = max(0.0, (gap - p.idm_s0) / p.idm_t_gap * 0.7)
            v0 = min(limit, v_stable)
            automated = bool(rng.random() < penetration)
            desired = limit * float(1.0 + rng.uniform(-p.desired_speed_spread,
                                                      p.desired_speed_spread))
            desired = min(desired, 1.2 * limit)
            out.append(SpawnedVehicle(
                automated=automated,
                state=VehicleState(s=s, d=lane * seg0.lane_width, heading_err=0.0,
                                   v=v0, a=0.0, lane=lane, steer=0.0),
                desired_speed=desired,
            ))
    out.sort(key=lambda sv: (sv.state.lane, sv.state.s))
    return out


_DEFAULTS = TrafficParams()
