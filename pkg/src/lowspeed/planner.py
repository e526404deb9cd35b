"""Trajectory planning: candidate generation, legality filter, selection,
and the continuously evaluated safe-stop fallback.

Candidates pair a quintic lateral polynomial (the minimal class meeting the
position/velocity/acceleration boundary conditions) with a jerk-bounded
longitudinal speed profile.  Surrounding traffic is predicted as lane-keeping
at constant speed capped by the local limit — the rule-abiding-driver
assumption — and every candidate is checked against speed limits, road
bounds, spacing floors and comfort limits before selection.  A safe-stop
trajectory (emergency lane when the road offers one, in-lane otherwise) is
recomputed every tick regardless of what the nominal plan does.
"""

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .config import PlannerParams, VehicleParams
from .road import (
    RoadMap,
    VehicleState,
    lane_center,
    road_bounds,
    speed_limit_at,
)


class ManeuverKind(str, enum.Enum):
    KEEP_LANE = "keep_lane"
    FOLLOW = "follow"
    CHANGE_LEFT = "change_left"
    CHANGE_RIGHT = "change_right"
    STOP = "stop"
    MRS = "mrs"
    EMERGENCY_STOP = "emergency_stop"


@dataclass(frozen=True)
class Maneuver:
    kind: ManeuverKind
    target_lane: int
    target_speed: float
    horizon: float


def solve_quintic(d0, dd0, ddd0, dT, ddT, dddT, T):
    """Coefficients a0..a5 of the unique quintic matching position, first and
    second derivative at both ends of [0, T]."""
    if T <= 0:
        raise ValueError(f"horizon must be > 0, got {T}")
    a0 = d0
    a1 = dd0
    a2 = 0.5 * ddd0
    dp = dT - (a0 + a1 * T + a2 * T * T)
    dv = ddT - (a1 + 2.0 * a2 * T)
    da = dddT - 2.0 * a2
    T2, T3, T4, T5 = T * T, T**3, T**4, T**5
    a3 = (20.0 * dp - 8.0 * dv * T + da * T2) / (2.0 * T3)
    a4 = (-30.0 * dp + 14.0 * dv * T - 2.0 * da * T2) / (2.0 * T4)
    a5 = (12.0 * dp - 6.0 * dv * T + da * T2) / (2.0 * T5)
    return (a0, a1, a2, a3, a4, a5)


def quintic_value(coeffs, t):
    a0, a1, a2, a3, a4, a5 = coeffs
    return a0 + t * (a1 + t * (a2 + t * (a3 + t * (a4 + t * a5))))


def quintic_d1(coeffs, t):
    _, a1, a2, a3, a4, a5 = coeffs
    return a1 + t * (2 * a2 + t * (3 * a3 + t * (4 * a4 + t * 5 * a5)))


def quintic_d2(coeffs, t):
    _, _, a2, a3, a4, a5 = coeffs
    return 2 * a2 + t * (6 * a3 + t * (12 * a4 + t * 20 * a5))


def quintic_d3(coeffs, t):
    _, _, _, a3, a4, a5 = coeffs
    return 6 * a3 + t * (24 * a4 + t * 60 * a5)


def _edge_grad(y, dt):
    """First derivative of regularly sampled y, edges one-sided."""
    if len(y) < 2:
        return np.zeros_like(y)
    out = np.empty_like(y)
    out[1:-1] = (y[2:] - y[:-2]) / (2.0 * dt)
    out[0] = (y[1] - y[0]) / dt
    out[-1] = (y[-1] - y[-2]) / dt
    return out


@dataclass(frozen=True)
class Trajectory:
    kind: ManeuverKind
    horizon: float
    s0: float
    lateral_coeffs: tuple          # quintic d(t)
    speed_ts: tuple                # piecewise-linear v(t) node times
    speed_vs: tuple                # node speeds
    target_lane: int
    lat_horizon: float = 0.0       # lateral move completes here; 0 = horizon
    cost: float = math.inf
    feasible: bool = True
    infeasibility_reasons: frozenset = frozenset()
    _samples: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def speed_profile(self):
        return tuple(zip(self.speed_ts, self.speed_vs))

    def _tl(self):
        return self.lat_horizon if self.lat_horizon > 0 else self.horizon

    def d_at(self, t):
        return quintic_value(self.lateral_coeffs, min(max(t, 0.0), self._tl()))

    def d_dot_at(self, t):
        t = min(max(t, 0.0), self._tl())
        return quintic_d1(self.lateral_coeffs, t) if t < self._tl() else 0.0

    def d_ddot_at(self, t):
        t = min(max(t, 0.0), self._tl())
        return quintic_d2(self.lateral_coeffs, t) if t < self._tl() else 0.0

    def v_at(self, t):
        return float(np.interp(t, self.speed_ts, self.speed_vs))

    def a_at(self, t):
        ts, vs = self.speed_ts, self.speed_vs
        if t <= ts[0] or t >= ts[-1]:
            return 0.0
        k = int(np.searchsorted(ts, t, side="right")) - 1
        dt = ts[k + 1] - ts[k]
        return (vs[k + 1] - vs[k]) / dt if dt > 0 else 0.0

    def s_at(self, t):
        ts = np.asarray(self.speed_ts)
        vs = np.asarray(self.speed_vs)
        t = min(max(t, 0.0), float(ts[-1]) + 10.0)
        grid = np.append(ts[ts < t], t)
        vgrid = np.interp(grid, ts, vs)
        return self.s0 + float(np.trapezoid(vgrid, grid))

    def sample(self, dt, until=None):
        """Arrays (t, s, d, v, a, jerk, d_ddot, d_dddot) on a regular grid.

        With ``until`` beyond the horizon the end state is held (speed and
        lateral position constant), which lets candidates with different
        horizons be compared over a common window.  Grids are memoized; the
        legality check and the cost reuse one sampling.
        """
        cached = self._samples.get((dt, until))
        if cached is not None:
            return cached
        ts = np.arange(0.0, (until or self.horizon) + 0.5 * dt, dt)
        vs = np.interp(ts, self.speed_ts, self.speed_vs)
        ss = self.s0 + np.concatenate(([0.0], np.cumsum(0.5 * (vs[1:] + vs[:-1]) * dt)))
        accs = _edge_grad(vs, dt)
        jerks = _edge_grad(accs, dt)
        tl = np.minimum(ts, self._tl())
        live = ts < self._tl()
        dd = quintic_value(self.lateral_coeffs, tl)
        d2 = np.where(live, quintic_d2(self.lateral_coeffs, tl), 0.0)
        d3 = np.where(live, quintic_d3(self.lateral_coeffs, tl), 0.0)
        out = (ts, ss, dd, vs, accs, jerks, d2, d3)
        self._samples[(dt, until)] = out
        return out


@dataclass(frozen=True, eq=False)
class Prediction:
    track_id: int
    ts: tuple                  # numpy arrays in practice; eq disabled
    ss: tuple                  # arc positions, unwrapped from the start point
    ds: tuple
    vs: tuple


@dataclass(frozen=True)
class PlanContext:
    target_speed: float                   # effective tracking target
    legal_limit_cap: Optional[float] = None   # advisory cap on top of statutory
    params: PlannerParams = field(default_factory=PlannerParams)
    vehicle: VehicleParams = field(default_factory=VehicleParams)


def _limit_at(s, road, ctx):
    lim = speed_limit_at(road.wrap_s(s) if road.closed else min(s, road.total_length), road)
    if ctx.legal_limit_cap is not None:
        lim = min(lim, ctx.legal_limit_cap)
    return lim


def _road_tables(road: RoadMap):
    """Per-segment arrays for vectorized sample-grid lookups, cached on the map."""
    tables = getattr(road, "_plan_tables", None)
    if tables is None:
        starts = np.asarray(road._starts[:-1])
        limits = np.asarray([s.speed_limit for s in road.segments])
        curvs = np.asarray([s.curvature for s in road.segments])
        lo = np.asarray([road_bounds(s)[0] for s in road.segments])
        hi = np.asarray([road_bounds(s)[1] for s in road.segments])
        tables = (starts, limits, curvs, lo, hi)
        road._plan_tables = tables
    return tables


def _segment_indices(road: RoadMap, ss):
    starts = _road_tables(road)[0]
    if road.closed:
        s = np.mod(ss, road.total_length)
    else:
        s = np.clip(ss, 0.0, road.total_length * (1.0 - 1e-12))
    return np.maximum(np.searchsorted(starts, s, side="right") - 1, 0)


def predict_others(tracks, road: RoadMap, horizon: float, tick: float = 0.1):
    """Lane-keeping constant-speed extrapolation, capped by the local limit."""
    preds = []
    n = int(round(horizon / tick))
    for trk in tracks:
        s = trk.s
        ts, ss, vs = [0.0], [s], [min(max(trk.v, 0.0), _limit_of(s, road))]
        for k in range(1, n + 1):
            v = min(max(trk.v, 0.0), _limit_of(s, road))
            s = s + v * tick
            ts.append(k * tick)
            ss.append(s)
            vs.append(v)
        preds.append(Prediction(track_id=trk.id, ts=np.asarray(ts),
                                ss=np.asarray(ss),
                                ds=np.full(n + 1, trk.d), vs=np.asarray(vs)))
    return preds


def _limit_of(s, road):
    s = road.wrap_s(s) if road.closed else min(max(s, 0.0), road.total_length)
    return speed_limit_at(s, road)


def find_lead(ego: VehicleState, tracks, road: RoadMap, params: PlannerParams):
    """Nearest confirmed track ahead in the ego lane."""
    seg, _ = road.segment_at(ego.s)
    best = None
    best_ds = None
    for trk in tracks:
        if not trk.confirmed:
            continue
        if abs(trk.d - lane_center(ego.lane, seg.lane_width)) > 0.5 * seg.lane_width:
            continue
        ds = road.delta_s(trk.s, ego.s)
        if 0.0 < ds <= params.lead_range and (best_ds is None or ds < best_ds):
            best, best_ds = trk, ds
    return best


def _limit_boundaries(road: RoadMap, s0: float, span: float, ctx: PlanContext):
    """(distance from s0, limit) of each upcoming drop in the legal limit."""
    out = []
    seg, u = road.segment_at(road.wrap_s(s0) if road.closed else min(s0, road.total_length))
    idx, _ = road.segment_index_at(road.wrap_s(s0) if road.closed else min(s0, road.total_length))
    cap = ctx.legal_limit_cap if ctx.legal_limit_cap is not None else math.inf
    cur = min(seg.speed_limit, cap)
    dist = seg.length - u
    j = idx
    while dist < span:
        j += 1
        if j >= len(road.segments):
            if not road.closed:
                break
            j = 0
        nxt = min(road.segments[j].speed_limit, cap)
        if nxt < cur:
            out.append((dist, nxt))
        cur = nxt
        dist += road.segments[j].length
    return out


def _boundary_brake(a_des, v, travelled, boundaries):
    """Cap a_des by the decel each upcoming limit drop kinematically requires."""
    for b_dist, b_limit in boundaries:
        rest = b_dist - travelled
        if rest <= 0.0 or v <= b_limit:
            continue
        a_need = (v * v - b_limit * b_limit) / (2.0 * max(rest, 0.1))
        a_des = min(a_des, -a_need)
    return a_des


def _local_cap(v_target, travelled, boundaries):
    """Target speed capped by every limit boundary already crossed."""
    for b_dist, b_limit in boundaries:
        if travelled >= b_dist:
            v_target = min(v_target, b_limit)
    return v_target


def _cruise_profile(v0, v_target, T, p: PlannerParams, tick=0.1, boundaries=(),
                    a0=0.0):
    v, a = v0, a0
    travelled = 0.0
    ts, vs = [0.0], [v0]
    for k in range(1, int(round(T / tick)) + 1):
        target = _local_cap(v_target, travelled, boundaries)
        a_des = min(max(target - v, -p.comfort_decel), p.comfort_accel)
        a_des = max(_boundary_brake(a_des, v, travelled, boundaries),
                    -p.emergency_decel)
        a += min(max(a_des - a, -p.profile_jerk * tick), p.profile_jerk * tick)
        v_new = max(0.0, v + a * tick)
        travelled += 0.5 * (v + v_new) * tick
        v = v_new
        ts.append(k * tick)
        vs.append(v)
    return tuple(ts), tuple(vs)


def _stop_profile(v0, T, p: PlannerParams, tick=0.1, stop_distance=None, a0=0.0):
    """Decelerate to zero, either by the horizon or within stop_distance.

    With a target distance the profile closes the loop on the remaining
    distance (a = -v^2 / 2*rest), so it lands at v=0 right there even with
    the jerk-limited entry.
    """
    v, a = v0, a0
    travelled = 0.0
    ts, vs = [0.0], [v0]
    for k in range(1, int(round(T / tick)) + 1):
        if v <= 0.05:
            a_des = 0.0
        elif stop_distance is None:
            a_des = -v0 / max(0.9 * T, tick)
        else:
            rest = stop_distance - travelled
            a_des = -p.emergency_decel if rest <= 0.1 else -v * v / (2.0 * rest)
        a_des = max(a_des, -p.emergency_decel)
        a += min(max(a_des - a, -p.profile_jerk * tick), p.profile_jerk * tick)
        v_new = max(0.0, v + a * tick)
        travelled += 0.5 * (v + v_new) * tick
        v = v_new
        ts.append(k * tick)
        vs.append(v)
    return tuple(ts), tuple(vs)


def _follow_profile(v0, gap0, pred: Prediction, v_cap, T, p: PlannerParams,
                    tick=0.1, boundaries=(), a0=0.0):
    """Constant-time-gap rollout against the predicted lead."""
    v, a, gap = v0, a0, gap0
    travelled = 0.0
    ts, vs = [0.0], [v0]
    n = int(round(T / tick))
    for k in range(1, n + 1):
        v_lead = pred.vs[min(k, len(pred.vs) - 1)]
        a_des = (p.follow_gap_gain * (gap - p.time_gap_s * v)
                 + p.follow_speed_gain * (v_lead - v))
        cap = _local_cap(v_cap, travelled, boundaries)
        if v > cap:
            a_des = min(a_des, cap - v)
        a_des = min(max(a_des, -p.comfort_decel), p.comfort_accel)
        a_des = max(_boundary_brake(a_des, v, travelled, boundaries),
                    -p.emergency_decel)
        a += min(max(a_des - a, -p.profile_jerk * tick), p.profile_jerk * tick)
        v_new = max(0.0, v + a * tick)
        gap += v_lead * tick - 0.5 * (v + v_new) * tick
        travelled += 0.5 * (v + v_new) * tick
        v = v_new
        ts.append(k * tick)
        vs.append(v)
    return tuple(ts), tuple(vs)


def generate_candidates(ego: VehicleState, tracks, road: RoadMap, ctx: PlanContext,
                        lat_accel0: float = 0.0):
    """Maneuver x horizon x end-speed-offset candidate set from the ego state.

    lat_accel0 carries the lateral acceleration of the reference being
    continued, so chained replans reproduce one smooth curve instead of
    restarting flat every tick.
    """
    p = ctx.params
    seg, _ = road.segment_at(ego.s)
    lo, hi = road_bounds(seg)
    if not (lo - 1.0 <= ego.d <= hi + 1.0):
        return []

    d0 = ego.d
    dd0 = ego.v * math.sin(ego.heading_err)
    ddd0 = lat_accel0
    legal = _limit_at(ego.s, road, ctx)
    lead = find_lead(ego, tracks, road, p)
    lead_pred = None
    if lead is not None:
        lead_pred = predict_others([lead], road, max(p.horizons))[0]

    maneuvers = [(ManeuverKind.KEEP_LANE, ego.lane)]
    if lead is not None and lead.v > 0.5:
        maneuvers.append((ManeuverKind.FOLLOW, ego.lane))
    if ego.lane + 1 < seg.lane_count:
        maneuvers.append((ManeuverKind.CHANGE_LEFT, ego.lane + 1))
    if ego.lane - 1 >= 0:
        maneuvers.append((ManeuverKind.CHANGE_RIGHT, ego.lane - 1))
    maneuvers.append((ManeuverKind.STOP, ego.lane))

    stop_distance = None
    if lead is not None:
        gap0 = road.delta_s(lead.s, ego.s) - ctx.vehicle.length
        d_stop = gap0 - p.clearance_min - 1.0
        if d_stop > 0.5:
            stop_distance = d_stop

    span = max(ego.v, 1.0) * max(p.horizons) + 60.0
    boundaries = _limit_boundaries(road, ego.s, span, ctx)

    out = []
    for kind, target_lane in maneuvers:
        d_target = lane_center(target_lane, seg.lane_width)
        offsets = (0.0,) if kind is ManeuverKind.STOP else p.speed_offsets
        for T in p.horizons:
            coeffs = solve_quintic(d0, dd0, ddd0, d_target, 0.0, 0.0, T)
            for off in offsets:
                if kind is ManeuverKind.STOP:
                    ts, vs = _stop_profile(ego.v, T, p, stop_distance=stop_distance,
                                           a0=ego.a)
                elif kind is ManeuverKind.FOLLOW:
                    gap0 = road.delta_s(lead.s, ego.s) - ctx.vehicle.length
                    v_cap = min(max(ctx.target_speed + off, 0.0), legal)
                    ts, vs = _follow_profile(ego.v, gap0, lead_pred, v_cap, T, p,
                                             boundaries=boundaries, a0=ego.a)
                else:
                    v_target = min(max(ctx.target_speed + off, 0.0), legal)
                    ts, vs = _cruise_profile(ego.v, v_target, T, p,
                                             boundaries=boundaries, a0=ego.a)
                out.append(Trajectory(
                    kind=kind, horizon=T, s0=ego.s, lateral_coeffs=coeffs,
                    speed_ts=ts, speed_vs=vs, target_lane=target_lane,
                ))
    return out


def check_legal(traj: Trajectory, ego: VehicleState, predictions, road: RoadMap,
                ctx: PlanContext):
    """(feasible, reasons): speed limits, road bounds, spacing floors and
    comfort limits checked on the 0.1 s sample grid; reasons name every
    violated rule."""
    p = ctx.params
    w_half = 0.5 * ctx.vehicle.width
    # judged over the longest planning window even for short candidates, so a
    # trajectory cannot hide an unavoidable violation behind its horizon end
    ts, ss, dd, vs, accs, jerks, d2, d3 = traj.sample(p.sample_dt, until=max(p.horizons))
    reasons = set()

    _, limit_tab, curv_tab, lo_tab, hi_tab = _road_tables(road)
    idx = _segment_indices(road, ss)

    # the first sample is the inherited state, not the candidate's doing
    limits = limit_tab[idx]
    if ctx.legal_limit_cap is not None:
        limits = np.minimum(limits, ctx.legal_limit_cap)
    if np.any(vs[1:] > limits[1:] + p.speed_tolerance):
        reasons.add("speed_limit")

    if np.any(dd < lo_tab[idx] + w_half - 1e-9) or np.any(dd > hi_tab[idx] - w_half + 1e-9):
        reasons.add("road_bounds")

    kappas = curv_tab[idx]
    if np.any(np.abs(kappas * vs**2 + d2) > p.lat_accel_max + 1e-9):
        reasons.add("lat_accel")
    if np.any(accs < ctx.vehicle.accel_min - 1e-6) or np.any(accs > ctx.vehicle.accel_max + 1e-6):
        reasons.add("accel")
    if np.any(np.abs(jerks) > ctx.vehicle.jerk_max + 1e-6) or \
       np.any(np.abs(d3) > ctx.vehicle.jerk_max + 1e-6):
        reasons.add("jerk")

    seg0, _ = road.segment_at(ego.s)
    overlap = p.lane_overlap * seg0.lane_width
    req = np.maximum(p.clearance_min, p.clearance_per_speed * vs)
    for pred in predictions:
        n = min(len(ts), len(pred.ts))
        diff = pred.ss[:n] - ss[:n]
        if road.closed:
            L = road.total_length
            diff = (diff + 0.5 * L) % L - 0.5 * L
        gaps = np.abs(diff) - ctx.vehicle.length
        same_lane = np.abs(pred.ds[:n] - dd[:n]) < overlap
        if np.any(same_lane & (gaps < req[:n])):
            reasons.add("clearance")

    return len(reasons) == 0, frozenset(reasons)


def _curv_of(s, road):
    s = road.wrap_s(s) if road.closed else min(max(s, 0.0), road.total_length)
    seg, _ = road.segment_at(s)
    return seg.curvature


_KIND_TIE = {ManeuverKind.KEEP_LANE: 0}


def trajectory_cost(traj: Trajectory, predictions, road: RoadMap, ctx: PlanContext):
    p = ctx.params
    ts, ss, dd, vs, accs, jerks, _d2, d3 = traj.sample(p.sample_dt, until=max(p.horizons))
    track_err = float(np.mean((vs - ctx.target_speed) ** 2))
    jerk = 0.0
    if len(ts) > 1:
        dtg = float(ts[1] - ts[0])
        jerk = float(np.sum(jerks**2) * dtg)
        jerk += float(np.sum(d3**2) * dtg)
    lane_change = 1.0 if traj.kind in (ManeuverKind.CHANGE_LEFT,
                                       ManeuverKind.CHANGE_RIGHT) else 0.0
    seg0, _ = road.segment_at(road.wrap_s(traj.s0))
    overlap = p.lane_overlap * seg0.lane_width
    min_ttc = math.inf
    for pred in predictions:
        n = min(len(ts), len(pred.ts))
        diff = pred.ss[:n] - ss[:n]
        if road.closed:
            L = road.total_length
            diff = (diff + 0.5 * L) % L - 0.5 * L
        same = np.abs(pred.ds[:n] - dd[:n]) < overlap
        gaps = np.abs(diff) - ctx.vehicle.length
        closing = np.where(diff > 0, vs[:n] - pred.vs[:n], pred.vs[:n] - vs[:n])
        mask = same & (closing > 0.1) & (gaps > 0)
        if np.any(mask):
            min_ttc = min(min_ttc, float(np.min(gaps[mask] / closing[mask])))
    cost = (p.w_speed * track_err + p.w_jerk * jerk + p.w_lane_change * lane_change)
    if min_ttc < p.ttc_horizon_s:
        cost += p.w_ttc / max(min_ttc, 1e-3)
    return cost


def select(candidates, predictions, road: RoadMap, ctx: PlanContext):
    """Minimum-cost feasible candidate; ties prefer lane keeping, then the
    shorter horizon.  Returns None when nothing is feasible (fall back to
    the safe stop)."""
    feasible = [c for c in candidates if c.feasible]
    if not feasible:
        return None
    scored = []
    for c in feasible:
        cost = trajectory_cost(c, predictions, road, ctx)
        scored.append((round(cost, 9), _KIND_TIE.get(c.kind, 1), c.horizon, c))
    scored.sort(key=lambda x: x[:3])
    best = scored[0]
    return replace(best[3], cost=best[0])


def mrs_trajectory(ego: VehicleState, road: RoadMap, tracks, ctx: PlanContext,
                   lat_accel0: float = 0.0):
    """Safe-stop trajectory, always defined: emergency-lane stop on equipped
    secured segments, in-lane stop otherwise, escalating to hard braking
    when a confirmed obstacle is too close for the comfortable rate."""
    p = ctx.params
    seg, _ = road.segment_at(ego.s)
    if ego.v < 0.05:
        coeffs = solve_quintic(ego.d, 0.0, 0.0, ego.d, 0.0, 0.0, 0.5)
        return Trajectory(kind=ManeuverKind.MRS, horizon=0.5, s0=ego.s,
                          lateral_coeffs=coeffs, speed_ts=(0.0, 0.5),
                          speed_vs=(0.0, 0.0), target_lane=ego.lane)

    if seg.secured and seg.has_emergency_lane:
        decel = p.mrs_decel
        d_target = -seg.lane_width
        target_lane = 0
    else:
        decel = p.stop_decel
        d_target = lane_center(ego.lane, seg.lane_width)
        target_lane = ego.lane

    kind = ManeuverKind.MRS
    lead = find_lead(ego, tracks, road, p)
    if lead is not None:
        gap = road.delta_s(lead.s, ego.s) - ctx.vehicle.length
        if ego.v**2 / (2.0 * decel) > gap - p.clearance_min:
            decel = p.emergency_decel
            kind = ManeuverKind.EMERGENCY_STOP

    T = ego.v / decel
    # complete the lateral move well before standstill: steering authority
    # dies with speed, so the tracking error needs rolling time to close
    lat_T = max(0.75 * T, 0.3)
    dd0 = ego.v * math.sin(ego.heading_err)
    coeffs = solve_quintic(ego.d, dd0, lat_accel0, d_target, 0.0, 0.0, lat_T)
    return Trajectory(
        kind=kind, horizon=T, s0=ego.s, lateral_coeffs=coeffs,
        speed_ts=(0.0, T), speed_vs=(ego.v, 0.0), target_lane=target_lane,
        lat_horizon=lat_T,
    )


@dataclass(frozen=True)
class PlanResult:
    nominal: Trajectory
    mrs: Trajectory
    degraded: bool = False
    candidate_count: int = 0
    feasible_count: int = 0


def plan(ego: VehicleState, tracks, road: RoadMap, ctx: PlanContext,
         lat_accel0: float = 0.0) -> PlanResult:
    """One planner tick: filtered/selected nominal plus the safe-stop pair.

    Both are produced every call; internal failures degrade to (mrs, mrs)
    with the degraded flag raised for the mode arbiter.
    """
    mrs = mrs_trajectory(ego, road, tracks, ctx, lat_accel0)
    try:
        confirmed = [t for t in tracks if t.confirmed]
        predictions = predict_others(confirmed, road, max(ctx.params.horizons))
        candidates = generate_candidates(ego, tracks, road, ctx, lat_accel0)
        checked = []
        for c in candidates:
            ok, reasons = check_legal(c, ego, predictions, road, ctx)
            checked.append(replace(c, feasible=ok, infeasibility_reasons=reasons))
        nominal = select(checked, predictions, road, ctx)
        if nominal is None:
            nominal = mrs
        return PlanResult(nominal=nominal, mrs=mrs, degraded=False,
                          candidate_count=len(checked),
                          feasible_count=sum(c.feasible for c in checked))
    except Exception:
        return PlanResult(nominal=mrs, mrs=mrs, degraded=True)
