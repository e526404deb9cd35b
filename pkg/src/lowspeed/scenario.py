"""Scenario files: a versioned JSON schema, strict validation, round-tripping.

A scenario is the single input to a run: the road, the ego vehicle and its
scripted driver, background traffic, a time-ordered event list and flat
configuration overrides.  Validation is exhaustive (every problem reported,
with its JSON path) and unknown keys are rejected everywhere.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

from .config import Config, ConfigError, apply_overrides
from .modes import Mode
from .road import RoadMap, RoadSegment

SCHEMA_VERSION = 1

PERSONAS = ("attentive", "distracted", "absent")
PERSONA_ACK_DELAY = {"attentive": 1.0, "distracted": 8.0, "absent": None}
EVENT_TYPES = ("obstacle_spawn", "secured_end_override", "sensor_fault")


class ScenarioError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("scenario invalid:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class ScriptEntry:
    t: float
    duration: float = 0.02
    steer_torque: float = 0.0
    throttle: float = 0.0
    brake: float = 0.0
    acknowledge: bool = False
    engage: Optional[str] = None
    disengage: bool = False
    reset_emergency: bool = False


@dataclass(frozen=True)
class DriverSpec:
    persona: str = "absent"
    ack_delay: Optional[float] = None     # None = persona default
    script: tuple = ()


@dataclass(frozen=True)
class EgoSpec:
    start_s: float = 0.0
    lane: int = 0
    v: float = 0.0
    mode: str = "driver"
    driver: DriverSpec = field(default_factory=DriverSpec)


@dataclass(frozen=True)
class TrafficSpec:
    count: int = 0
    density: Optional[float] = None       # veh/km/lane, overrides count
    penetration: float = 0.0


@dataclass(frozen=True)
class Event:
    t: float
    type: str
    s: Optional[float] = None
    ahead: Optional[float] = None
    lane: int = 0
    restore_t: Optional[float] = None
    notice: Optional[float] = None        # s of warning before the zone ends


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    duration: float
    road: RoadMap
    ego: EgoSpec
    traffic: TrafficSpec
    events: tuple
    config_overrides: dict
    schema_version: int = SCHEMA_VERSION

    def build_config(self, base: Config = None) -> Config:
        return apply_overrides(base or Config(), self.config_overrides)


def _check_keys(obj, allowed, path, errors):
    for key in obj:
        if key not in allowed:
            errors.append(f"{path}.{key}: unknown key")


def _num(obj, key, path, errors, default=None, required=False):
    if key not in obj:
        if required:
            errors.append(f"{path}.{key}: required")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        errors.append(f"{path}.{key}: expected a number, got {val!r}")
        return default
    return float(val)


def _int(obj, key, path, errors, default=None, required=False):
    if key not in obj:
        if required:
            errors.append(f"{path}.{key}: required")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, int):
        errors.append(f"{path}.{key}: expected an integer, got {val!r}")
        return default
    return val


def _bool(obj, key, path, errors, default=None, required=False):
    if key not in obj:
        if required:
            errors.append(f"{path}.{key}: required")
        return default
    val = obj[key]
    if not isinstance(val, bool):
        errors.append(f"{path}.{key}: expected a boolean, got {val!r}")
        return default
    return val


_SEGMENT_KEYS = {"id", "length", "curvature", "lane_count", "lane_width",
                 "speed_limit", "secured", "has_emergency_lane",
                 "marking_quality", "instrumented"}


def _parse_segment(obj, path, errors):
    _check_keys(obj, _SEGMENT_KEYS, path, errors)
    return RoadSegment(
        id=_int(obj, "id", path, errors, required=True) or 0,
        length=_num(obj, "length", path, errors, required=True) or 1.0,
        curvature=_num(obj, "curvature", path, errors, default=0.0),
        lane_count=_int(obj, "lane_count", path, errors, default=1),
        lane_width=_num(obj, "lane_width", path, errors, default=3.5),
        speed_limit=_num(obj, "speed_limit", path, errors, default=13.89),
        secured=_bool(obj, "secured", path, errors, default=False),
        has_emergency_lane=_bool(obj, "has_emergency_lane", path, errors, default=False),
        marking_quality=_num(obj, "marking_quality", path, errors, default=1.0),
        instrumented=_bool(obj, "instrumented", path, errors, default=False),
    )


def _parse_driver(obj, path, errors):
    _check_keys(obj, {"persona", "ack_delay", "script"}, path, errors)
    persona = obj.get("persona", "absent")
    if persona not in PERSONAS:
        errors.append(f"{path}.persona: must be one of {PERSONAS}, got {persona!r}")
        persona = "absent"
    entries = []
    script = obj.get("script", [])
    if not isinstance(script, list):
        errors.append(f"{path}.script: expected a list")
        script = []
    entry_keys = {"t", "duration", "steer_torque", "throttle", "brake",
                  "acknowledge", "engage", "disengage", "reset_emergency"}
    for i, e in enumerate(script):
        ep = f"{path}.script[{i}]"
        if not isinstance(e, dict):
            errors.append(f"{ep}: expected an object")
            continue
        _check_keys(e, entry_keys, ep, errors)
        engage = e.get("engage")
        if engage is not None and engage not in [m.value for m in Mode]:
            errors.append(f"{ep}.engage: unknown mode {engage!r}")
            engage = None
        entries.append(ScriptEntry(
            t=_num(e, "t", ep, errors, required=True) or 0.0,
            duration=_num(e, "duration", ep, errors, default=0.02),
            steer_torque=_num(e, "steer_torque", ep, errors, default=0.0),
            throttle=_num(e, "throttle", ep, errors, default=0.0),
            brake=_num(e, "brake", ep, errors, default=0.0),
            acknowledge=_bool(e, "acknowledge", ep, errors, default=False),
            engage=engage,
            disengage=_bool(e, "disengage", ep, errors, default=False),
            reset_emergency=_bool(e, "reset_emergency", ep, errors, default=False),
        ))
    return DriverSpec(persona=persona,
                      ack_delay=_num(obj, "ack_delay", path, errors),
                      script=tuple(entries))


def _parse_event(obj, path, errors):
    _check_keys(obj, {"t", "type", "s", "ahead", "lane", "restore_t", "notice"},
                path, errors)
    etype = obj.get("type")
    if etype not in EVENT_TYPES:
        errors.append(f"{path}.type: must be one of {EVENT_TYPES}, got {etype!r}")
        etype = "obstacle_spawn"
    ev = Event(
        t=_num(obj, "t", path, errors, required=True) or 0.0,
        type=etype,
        s=_num(obj, "s", path, errors),
        ahead=_num(obj, "ahead", path, errors),
        lane=_int(obj, "lane", path, errors, default=0),
        restore_t=_num(obj, "restore_t", path, errors),
        notice=_num(obj, "notice", path, errors),
    )
    if etype == "obstacle_spawn" and ev.s is None and ev.ahead is None:
        errors.append(f"{path}: obstacle_spawn needs either 's' or 'ahead'")
    return ev


def parse_scenario(data: dict) -> Scenario:
    errors = []
    if not isinstance(data, dict):
        raise ScenarioError(["top level: expected an object"])
    _check_keys(data, {"schema_version", "name", "seed", "duration", "map",
                       "ego", "traffic", "events", "config"}, "$", errors)

    version = _int(data, "schema_version", "$", errors, default=SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        errors.append(f"$.schema_version: unsupported version {version}")
    name = data.get("name", "unnamed")
    if not isinstance(name, str):
        errors.append(f"$.name: expected a string, got {name!r}")
        name = "unnamed"
    seed = _int(data, "seed", "$", errors, default=0)
    duration = _num(data, "duration", "$", errors, required=True) or 1.0
    if duration <= 0:
        errors.append(f"$.duration: must be > 0, got {duration}")

    map_obj = data.get("map")
    road = None
    if not isinstance(map_obj, dict):
        errors.append("$.map: required object")
    else:
        _check_keys(map_obj, {"closed", "segments"}, "$.map", errors)
        segs_obj = map_obj.get("segments")
        if not isinstance(segs_obj, list) or not segs_obj:
            errors.append("$.map.segments: required non-empty list")
        else:
            segments = [_parse_segment(s, f"$.map.segments[{i}]", errors)
                        for i, s in enumerate(segs_obj)]
            for s in segments:
                errors.extend(f"$.map.segments: {e}" for e in s.invariant_errors())
            ids = [s.id for s in segments]
            if len(set(ids)) != len(ids):
                errors.append("$.map.segments: segment ids must be unique")
            if not any(f"$.map.segments" in e for e in errors):
                road = RoadMap(segments, closed=_bool(map_obj, "closed", "$.map",
                                                      errors, default=False))

    ego_obj = data.get("ego", {})
    ego = EgoSpec()
    if not isinstance(ego_obj, dict):
        errors.append("$.ego: expected an object")
    else:
        _check_keys(ego_obj, {"start_s", "lane", "v", "mode", "driver"}, "$.ego", errors)
        mode = ego_obj.get("mode", "driver")
        if mode not in [m.value for m in Mode]:
            errors.append(f"$.ego.mode: unknown mode {mode!r}")
            mode = "driver"
        driver = _parse_driver(ego_obj.get("driver", {}), "$.ego.driver", errors) \
            if isinstance(ego_obj.get("driver", {}), dict) else DriverSpec()
        ego = EgoSpec(
            start_s=_num(ego_obj, "start_s", "$.ego", errors, default=0.0),
            lane=_int(ego_obj, "lane", "$.ego", errors, default=0),
            v=_num(ego_obj, "v", "$.ego", errors, default=0.0),
            mode=mode,
            driver=driver,
        )
        if ego.v < 0:
            errors.append(f"$.ego.v: must be >= 0, got {ego.v}")
        if road is not None:
            seg0, _ = road.segment_at(min(max(ego.start_s, 0.0), road.total_length))
            if not 0 <= ego.lane < seg0.lane_count:
                errors.append(f"$.ego.lane: {ego.lane} outside [0, {seg0.lane_count})")

    traffic_obj = data.get("traffic", {})
    traffic = TrafficSpec()
    if not isinstance(traffic_obj, dict):
        errors.append("$.traffic: expected an object")
    else:
        _check_keys(traffic_obj, {"count", "density", "penetration"}, "$.traffic", errors)
        traffic = TrafficSpec(
            count=_int(traffic_obj, "count", "$.traffic", errors, default=0),
            density=_num(traffic_obj, "density", "$.traffic", errors),
            penetration=_num(traffic_obj, "penetration", "$.traffic", errors, default=0.0),
        )
        if not 0.0 <= traffic.penetration <= 1.0:
            errors.append(f"$.traffic.penetration: must be in [0,1], got {traffic.penetration}")

    events_obj = data.get("events", [])
    events = []
    if not isinstance(events_obj, list):
        errors.append("$.events: expected a list")
    else:
        events = [_parse_event(e, f"$.events[{i}]", errors)
                  for i, e in enumerate(events_obj) if isinstance(e, dict)]
        times = [e.t for e in events]
        if times != sorted(times):
            errors.append("$.events: must be time-ordered")
        for i, e in enumerate(events):
            if not 0.0 <= e.t <= duration:
                errors.append(f"$.events[{i}].t: {e.t} outside [0, {duration}]")

    config = data.get("config", {})
    if not isinstance(config, dict):
        errors.append("$.config: expected an object")
        config = {}
    else:
        try:
            apply_overrides(Config(), config)
        except ConfigError as exc:
            errors.append(f"$.config: {exc}")

    if errors:
        raise ScenarioError(errors)
    return Scenario(name=name, seed=seed, duration=duration, road=road, ego=ego,
                    traffic=traffic, events=tuple(events), config_overrides=dict(config),
                    schema_version=SCHEMA_VERSION)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                [f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]
            ) from exc
    return parse_scenario(data)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "schema_version": sc.schema_version,
        "name": sc.name,
        "seed": sc.seed,
        "duration": sc.duration,
        "map": {
            "closed": sc.road.closed,
            "segments": [
                {
                    "id": s.id, "length": s.length, "curvature": s.curvature,
                    "lane_count": s.lane_count, "lane_width": s.lane_width,
                    "speed_limit": s.speed_limit, "secured": s.secured,
                    "has_emergency_lane": s.has_emergency_lane,
                    "marking_quality": s.marking_quality,
                    "instrumented": s.instrumented,
                }
                for s in sc.road.segments
            ],
        },
        "ego": {
            "start_s": sc.ego.start_s, "lane": sc.ego.lane, "v": sc.ego.v,
            "mode": sc.ego.mode,
            "driver": {
                "persona": sc.ego.driver.persona,
                **({"ack_delay": sc.ego.driver.ack_delay}
                   if sc.ego.driver.ack_delay is not None else {}),
                "script": [
                    {k: v for k, v in {
                        "t": e.t, "duration": e.duration,
                        "steer_torque": e.steer_torque, "throttle": e.throttle,
                        "brake": e.brake, "acknowledge": e.acknowledge,
                        "engage": e.engage, "disengage": e.disengage,
                        "reset_emergency": e.reset_emergency,
                    }.items() if v not in (0.0, False, None) or k in ("t",)}
                    for e in sc.ego.driver.script
                ],
            },
        },
        "traffic": {
            "count": sc.traffic.count,
            **({"density": sc.traffic.density} if sc.traffic.density is not None else {}),
            "penetration": sc.traffic.penetration,
        },
        "events": [
            {k: v for k, v in {
                "t": e.t, "type": e.type, "s": e.s, "ahead": e.ahead,
                "lane": e.lane, "restore_t": e.restore_t, "notice": e.notice,
            }.items() if v is not None and (k != "lane" or v != 0)}
            for e in sc.events
        ],
        "config": dict(sc.config_overrides),
    }


def save_scenario(sc: Scenario, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=2, sort_keys=True)
        fh.write("\n")
