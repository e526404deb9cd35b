"""Simulated perception: lane sensing, localization, object detection, fusion.

Detections are simulated at object level (position + range/field-of-view +
noise + misses + occlusion), not at pixel level.  The fusion layer turns the
camera/laser detection streams into a single confirmed-track picture: the
camera contributes no speed, the laser does, so the pairing is genuinely
complementary.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

from .config import PerceptionParams
from .road import RoadMap, VehicleState, frenet_to_global, wrap_angle


@dataclass(frozen=True)
class LaneObservation:
    valid: bool
    lateral_offset: float = 0.0   # m, from own lane center
    heading_err: float = 0.0      # rad
    curvature_est: float = 0.0    # 1/m
    range_valid: float = 0.0      # m, <= 40


@dataclass(frozen=True)
class Detection:
    sensor: str                   # "camera" | "laser"
    rel_s: float                  # m, along-road offset from ego
    rel_d: float                  # m, lateral offset from ego
    rel_speed: Optional[float]    # m/s, laser only
    timestamp: float              # s


@dataclass(frozen=True)
class ObjectTrack:
    id: int
    s: float
    d: float
    v: float
    hits: int = 1
    misses: int = 0
    confirmed: bool = False
    sources: frozenset = frozenset()
    crowd_steps: int = 0          # consecutive steps spent inside another track's gate


class LaneSensor:
    """Per-step Bernoulli lane detection with a short hold-over debounce.

    The raw draw succeeds with the segment's marking quality; dropouts
    shorter than the debounce window are bridged with the last good
    measurement so downstream consumers see a stable signal.
    """

    def __init__(self, params: PerceptionParams, rng):
        self.p = params
        self.rng = rng
        self.raw_valid_count = 0
        self.step_count = 0
        self._last_valid_t = None
        self._last_obs = None

    def sense(self, ego: VehicleState, road: RoadMap, t: float) -> LaneObservation:
        seg, _ = road.segment_at(ego.s)
        raw = self.rng.random() < seg.marking_quality
        self.step_count += 1
        if raw:
            self.raw_valid_count += 1
            obs = LaneObservation(
                valid=True,
                lateral_offset=(ego.d - ego.lane * seg.lane_width)
                + self.rng.normal(0.0, self.p.lane_sigma_d),
                heading_err=ego.heading_err + self.rng.normal(0.0, self.p.lane_sigma_psi),
                curvature_est=seg.curvature,
                range_valid=self.p.lane_range,
            )
            self._last_valid_t = t
            self._last_obs = obs
            return obs
        if self._last_valid_t is not None and (t - self._last_valid_t) <= self.p.lane_debounce_s:
            age = t - self._last_valid_t
            decay = max(0.0, 1.0 - age / self.p.lane_debounce_s)
            return replace(self._last_obs, range_valid=self.p.lane_range * decay)
        return LaneObservation(valid=False)


class Localizer:
    """Truth plus exponentially-smoothed noise on s and v.

    The filter smooths the error, not the state, so it tracks motion without
    lag and a zero-noise configuration returns the truth exactly.
    """

    def __init__(self, params: PerceptionParams, rng):
        self.p = params
        self.rng = rng
        self._err_s = 0.0
        self._err_v = 0.0
        self._primed = False

    def estimate(self, truth: VehicleState, road: Optional[RoadMap] = None) -> VehicleState:
        a = self.p.loc_alpha
        raw_s = self.rng.normal(0.0, self.p.loc_sigma_s) if self.p.loc_sigma_s > 0 else 0.0
        raw_v = self.rng.normal(0.0, self.p.loc_sigma_v) if self.p.loc_sigma_v > 0 else 0.0
        if not self._primed:
            self._err_s, self._err_v = raw_s, raw_v
            self._primed = True
        else:
            self._err_s = (1.0 - a) * self._err_s + a * raw_s
            self._err_v = (1.0 - a) * self._err_v + a * raw_v
        s = truth.s + self._err_s
        if road is not None:
            # localization is map-matched: the estimate stays on the map
            s = road.wrap_s(s) if road.closed else min(max(s, 0.0), road.total_length)
        return replace(truth, s=s, v=max(0.0, truth.v + self._err_v))


@dataclass(frozen=True)
class SensedObject:
    """World-truth input to the object sensors: any vehicle or static obstacle."""
    s: float
    d: float
    v: float


def sense_objects(
    ego: VehicleState,
    others,
    statics,
    rng,
    road: RoadMap,
    params: PerceptionParams,
    t: float = 0.0,
):
    """Camera and laser detections of surrounding objects, with occlusion.

    Ranges/fields of view are evaluated on global geometry; reported offsets
    are road-frame deltas so fusion can work in (s, d).
    """
    p = params
    targets = [SensedObject(o.s, o.d, o.v) for o in others]
    targets += [SensedObject(o.s, o.d, 0.0) for o in statics]
    # anything beyond the longest sensor range can neither be seen nor occlude
    # a visible object (an occluder lies between ego and its target)
    reach = p.laser_range + 5.0
    targets = [o for o in targets
               if abs(road.delta_s(o.s, ego.s)) <= reach and abs(o.d - ego.d) <= reach]
    ex, ey, epsi = frenet_to_global(ego.s, ego.d, ego.heading_err, road)

    positions = [frenet_to_global(o.s, o.d, 0.0, road)[:2] for o in targets]
    detections = []
    for i, obj in enumerate(targets):
        ox, oy = positions[i]
        dx, dy = ox - ex, oy - ey
        rng_m = math.hypot(dx, dy)
        if rng_m < 1e-6:
            continue
        bearing = wrap_angle(math.atan2(dy, dx) - epsi)
        occluded = any(
            _segment_hits_disc(ex, ey, ox, oy, positions[j][0], positions[j][1],
                               p.occlusion_radius)
            for j in range(len(targets))
            if j != i
        )
        rel_s = road.delta_s(obj.s, ego.s)
        rel_d = obj.d - ego.d
        # camera: short range, narrow field, no speed
        if (not occluded and rng_m <= p.camera_range and abs(bearing) <= p.camera_half_fov
                and rng.random() >= p.camera_miss):
            detections.append(Detection(
                sensor="camera",
                rel_s=rel_s + rng.normal(0.0, p.camera_sigma),
                rel_d=rel_d + rng.normal(0.0, p.camera_sigma),
                rel_speed=None,
                timestamp=t,
            ))
        # laser: long range, wide field, measures closing speed
        if (not occluded and rng_m <= p.laser_range and abs(bearing) <= p.laser_half_fov
                and rng.random() >= p.laser_miss):
            detections.append(Detection(
                sensor="laser",
                rel_s=rel_s + rng.normal(0.0, p.laser_sigma),
                rel_d=rel_d + rng.normal(0.0, p.laser_sigma),
                rel_speed=obj.v - ego.v,
                timestamp=t,
            ))
    return detections


def _segment_hits_disc(x0, y0, x1, y1, cx, cy, radius):
    """True when the open segment (x0,y0)-(x1,y1) passes within radius of (cx,cy)."""
    vx, vy = x1 - x0, y1 - y0
    L2 = vx * vx + vy * vy
    if L2 < 1e-12:
        return False
    u = ((cx - x0) * vx + (cy - y0) * vy) / L2
    if u <= 0.02 or u >= 0.98:  # endpoints (sensor, target) do not self-occlude
        return False
    px, py = x0 + u * vx, y0 + u * vy
    return math.hypot(px - cx, py - cy) < radius


def associate(tracks, det_positions, gate):
    """Greedy nearest-neighbor association of detections to predicted tracks.

    det_positions: list of (s, d, sensor).  Returns {det_index: track_index}.
    A track accepts at most one detection per sensor; ties break on smallest
    distance, then lowest track id.
    """
    pairs = []
    for di, (ds, dd, _sensor) in enumerate(det_positions):
        for ti, trk in enumerate(tracks):
            dist = math.hypot(ds - trk.s, dd - trk.d)
            if dist <= gate:
                pairs.append((dist, trk.id, di, ti))
    pairs.sort()
    taken_slots = set()   # (track_index, sensor)
    assigned = {}
    for dist, _tid, di, ti in pairs:
        if di in assigned:
            continue
        sensor = det_positions[di][2]
        if (ti, sensor) in taken_slots:
            continue
        assigned[di] = ti
        taken_slots.add((ti, sensor))
    return assigned


def fuse(tracks, detections, dt: float, ego_est: VehicleState, road: RoadMap,
         params: PerceptionParams):
    """One fusion step: predict, associate, update, manage track life cycle.

    Returns a new track list; never mutates its inputs.  Matched tracks blend
    measurement and prediction 0.7/0.3 and gain a hit; unmatched tracks coast
    and gain a miss (5 consecutive misses delete); unmatched detections spawn
    tentative tracks; 3 hits confirm.  Two tracks sharing the association
    gate for 3 consecutive steps collapse into the better one.
    """
    p = params
    w = p.meas_weight

    predicted = [
        replace(t, s=road.wrap_s(t.s + t.v * dt))
        for t in sorted(tracks, key=lambda t: t.id)
    ]
    det_pos = [
        (road.wrap_s(ego_est.s + det.rel_s), ego_est.d + det.rel_d, det.sensor)
        for det in detections
    ]
    assigned = associate(predicted, det_pos, p.gate)

    by_track = {}
    for di, ti in assigned.items():
        by_track.setdefault(ti, []).append(di)

    out = []
    for ti, trk in enumerate(predicted):
        dis = by_track.get(ti)
        if not dis:
            trk = replace(trk, misses=trk.misses + 1)
            if trk.misses < p.delete_misses:
                out.append(trk)
            continue
        # precision-weighted measurement (laser is the tighter sensor)
        ws = [1.0 / max(p.camera_sigma if detections[di].sensor == "camera"
                        else p.laser_sigma, 1e-3) ** 2
              for di in dis]
        tot = sum(ws)
        meas_s = sum(wi * det_pos[di][0] for wi, di in zip(ws, dis)) / tot
        meas_d = sum(wi * det_pos[di][1] for wi, di in zip(ws, dis)) / tot
        s_new = w * meas_s + (1.0 - w) * trk.s
        d_new = w * meas_d + (1.0 - w) * trk.d
        v_new = trk.v
        laser_dis = [di for di in dis if detections[di].rel_speed is not None]
        if laser_dis:
            v_meas = ego_est.v + detections[laser_dis[0]].rel_speed
            v_new = w * v_meas + (1.0 - w) * trk.v
        else:
            v_new = max(0.0, trk.v + p.camera_v_beta * (meas_s - trk.s) / dt)
        hits = trk.hits + 1
        out.append(replace(
            trk, s=s_new, d=d_new, v=max(0.0, v_new), hits=hits, misses=0,
            confirmed=trk.confirmed or hits >= p.confirm_hits,
            sources=trk.sources | {detections[di].sensor for di in dis},
        ))

    # spawn tentative tracks from leftovers; later leftovers may join a
    # track spawned earlier in this same step (camera + laser pairing)
    next_id = max((t.id for t in out), default=-1) + 1
    spawned = []
    for di in range(len(detections)):
        if di in assigned:
            continue
        ds, dd, sensor = det_pos[di]
        joined = False
        for k, sp in enumerate(spawned):
            if sensor not in sp.sources and math.hypot(ds - sp.s, dd - sp.d) <= p.gate:
                spawned[k] = replace(
                    sp, s=0.5 * (sp.s + ds), d=0.5 * (sp.d + dd),
                    sources=sp.sources | {sensor},
                    v=(ego_est.v + detections[di].rel_speed
                       if detections[di].rel_speed is not None else sp.v),
                )
                joined = True
                break
        if joined:
            continue
        v0 = (ego_est.v + detections[di].rel_speed
              if detections[di].rel_speed is not None else ego_est.v)
        spawned.append(ObjectTrack(
            id=next_id, s=ds, d=dd, v=max(0.0, v0), hits=1, misses=0,
            confirmed=False, sources=frozenset({sensor}),
        ))
        next_id += 1
    out.extend(spawned)

    # duplicate suppression: count steps spent within another live track's gate
    crowded = set()
    for i in range(len(out)):
        for j in range(i + 1, len(out)):
            a, b = out[i], out[j]
            if math.hypot(a.s - b.s, a.d - b.d) <= p.gate:
                crowded.add(i)
                crowded.add(j)
    drop = set()
    for i in range(len(out)):
        steps = out[i].crowd_steps + 1 if i in crowded else 0
        out[i] = replace(out[i], crowd_steps=steps)
    for i in range(len(out)):
        for j in range(i + 1, len(out)):
            a, b = out[i], out[j]
            if (a.crowd_steps >= p.crowd_steps and b.crowd_steps >= p.crowd_steps
                    and math.hypot(a.s - b.s, a.d - b.d) <= p.gate):
                worse = _worse_track(i, j, out)
                drop.add(worse)
    out = [t for k, t in enumerate(out) if k not in drop]
    return sorted(out, key=lambda t: t.id)


def _worse_track(i, j, tracks):
    a, b = tracks[i], tracks[j]
    ka = (a.confirmed, a.hits, -a.id)
    kb = (b.confirmed, b.hits, -b.id)
    return i if ka < kb else j
