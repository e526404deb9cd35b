"""Central configuration: every gain, limit and threshold the modules use.

Scenario files can override any value through a flat ``"group.field"`` key,
so tuning never requires a code change.
"""

import copy
import math
from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    """Unknown key or ill-typed value in a configuration override."""


@dataclass
class VehicleParams:
    wheelbase: float = 2.7        # m
    length: float = 4.5           # m
    width: float = 1.8            # m
    mass: float = 1500.0          # kg
    steer_max: float = 0.55       # rad, front-wheel angle
    steer_rate_max: float = 0.8   # rad/s
    accel_min: float = -6.0       # m/s^2
    accel_max: float = 2.0        # m/s^2
    jerk_max: float = 4.0         # m/s^3


@dataclass
class PerceptionParams:
    lane_sigma_d: float = 0.05        # m
    lane_sigma_psi: float = 0.01      # rad
    lane_debounce_s: float = 0.5      # bridge dropouts shorter than this
    lane_range: float = 40.0          # m
    loc_sigma_s: float = 0.5          # m
    loc_sigma_v: float = 0.1          # m/s
    loc_alpha: float = 0.3            # error-smoothing factor, 1.0 = raw
    camera_range: float = 40.0        # m
    camera_half_fov: float = math.radians(22.5)
    camera_sigma: float = 0.3         # m
    camera_miss: float = 0.05
    laser_range: float = 80.0         # m
    laser_half_fov: float = math.radians(60.0)
    laser_sigma: float = 0.1          # m
    laser_miss: float = 0.02
    occlusion_radius: float = 1.0     # m, vehicle disc for shadowing
    gate: float = 2.0                 # m, association gate in (s, d)
    confirm_hits: int = 3
    delete_misses: int = 5
    meas_weight: float = 0.7          # measurement vs prediction blend
    camera_v_beta: float = 0.05       # speed update gain for camera-only tracks
    crowd_steps: int = 3              # steps two tracks may share a gate


@dataclass
class ArbiterParams:
    full_speed_max: float = 13.89     # m/s, 50 km/h engagement guard
    speed_hysteresis: float = 0.55    # m/s, in-mode tolerance band
    overspeed_dwell_s: float = 1.0    # sustained excess before a take-over request
    tor_deadline_s: float = 10.0
    tor_lookahead_margin_s: float = 2.0   # issue this early before a zone boundary
    monitor_window_s: float = 2.0
    torque_activity: float = 0.3      # N*m, strict >
    pedal_activity: float = 0.05      # throttle/brake fraction, strict >
    ack_counts_as_takeover: bool = True
    tor_speed_decay: float = 0.5      # m/s^2 target-speed decay while pending
    tor_speed_floor: float = 5.0      # m/s


@dataclass
class PlannerParams:
    tick_s: float = 0.1
    sample_dt: float = 0.1
    horizons: tuple = (3.0, 4.0, 5.0)
    speed_offsets: tuple = (-2.0, -1.0, 0.0, 1.0)
    time_gap_s: float = 1.8           # following spacing per m/s of lead speed
    follow_gap_gain: float = 0.25
    follow_speed_gain: float = 0.5
    clearance_min: float = 2.0        # m
    clearance_per_speed: float = 0.5  # s, gap floor grows with speed
    lane_overlap: float = 0.8         # fraction of lane width counted as same lane
    lat_accel_max: float = 2.5        # m/s^2
    comfort_accel: float = 1.0        # m/s^2
    comfort_decel: float = 2.5        # m/s^2
    speed_tolerance: float = 0.1      # m/s, legality allowance past the limit
    speed_margin: float = 0.1         # m/s, planning target sits under the limit
    profile_jerk: float = 3.0         # m/s^3, candidate speed profiles
    w_speed: float = 1.0
    w_jerk: float = 0.5
    w_lane_change: float = 2.0
    w_ttc: float = 4.0
    ttc_horizon_s: float = 5.0
    mrs_decel: float = 2.5            # m/s^2, emergency-lane stop
    stop_decel: float = 3.0           # m/s^2, in-lane stop
    emergency_decel: float = 6.0      # m/s^2, escalated stop
    lead_range: float = 80.0          # m, follow-maneuver search


@dataclass
class ControlParams:
    k_d: float = 0.5                  # rad per m of lateral error
    k_psi: float = 1.2                # rad per rad of heading error
    preview_s: float = 0.0            # s, optional trajectory reference lookahead
    k_v: float = 0.8                  # 1/s, speed tracking
    ctg_gap_gain: float = 0.25        # 1/s^2
    ctg_speed_gain: float = 0.5       # 1/s
    ctg_standstill: float = 2.0       # m, desired gap at v=0
    ctg_time_gap: float = 1.8         # s
    stop_guard_accel: float = 1.5     # m/s^2, kinematic stop guard kicks in above this
    torque_per_rad: float = 20.0      # N*m per rad of wheel-angle error
    assist_torque_max: float = 3.0    # N*m
    column_rate_per_torque: float = 2.0   # rad/s per N*m, by-wire column
    override_torque: float = 2.0      # N*m, strict >
    override_latch_s: float = 0.3
    override_ramp_s: float = 0.5      # authority 1 -> floor after latch
    override_floor: float = 0.15
    override_clear_torque: float = 0.5
    override_clear_s: float = 2.0
    assist_dead_zone: float = 0.2     # N*m, assist below this can be overridden either way
    pedal_gain: float = 20.0          # N per 2 m/s^2 of excess demand
    pedal_cap: float = 40.0           # N
    idle_rate: float = 0.15           # g/s
    air_density: float = 1.2          # kg/m^3
    drag_coeff: float = 0.62
    frontal_area: float = 2.0         # m^2
    rolling_coeff: float = 0.011
    engine_eff: float = 0.30
    fuel_lhv: float = 43000.0         # J/g
    coast_decel: float = 0.4          # m/s^2, advisory coast-down
    eco_lookahead: float = 200.0      # m


@dataclass
class TrafficParams:
    idm_a_max: float = 1.0            # m/s^2
    idm_b_comf: float = 1.5           # m/s^2
    idm_s0: float = 2.0               # m
    idm_t_gap: float = 1.5            # s
    idm_delta: float = 4.0
    idm_floor: float = -8.0           # m/s^2
    desired_speed_spread: float = 0.15    # uniform +-, times the limit
    density_slow: float = 25.0        # veh/km/lane
    density_jam: float = 40.0         # veh/km/lane
    advise_slow: float = 11.11        # m/s (40 km/h)
    advise_jam: float = 8.33          # m/s (30 km/h)
    rec_ttl_s: float = 10.0
    lane_changes: bool = False        # conventional lane changes break the
                                      # lane-keeping prediction; off by default


@dataclass
class SimParams:
    dt: float = 0.02                  # s, world step
    supervisor_period_s: float = 1.0
    snapshot_period_s: float = 0.05   # 20 Hz telemetry
    gantry_s: float = -1.0            # throughput reference; <0 = mid-map
    fleet_full_stack: bool = False    # non-ego automated vehicles run the
                                      # reduced (controller-only) stack unless set
    ttc_bins: tuple = (0.5, 1.0, 2.0, 3.0, 5.0, 10.0)
    manual_coast_decel: float = 0.2   # m/s^2, pedal-free rolling loss
    input_hold_s: float = 0.25        # live driver inputs stale after this


@dataclass
class Config:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    perception: PerceptionParams = field(default_factory=PerceptionParams)
    arbiter: ArbiterParams = field(default_factory=ArbiterParams)
    planner: PlannerParams = field(default_factory=PlannerParams)
    control: ControlParams = field(default_factory=ControlParams)
    traffic: TrafficParams = field(default_factory=TrafficParams)
    sim: SimParams = field(default_factory=SimParams)


def apply_overrides(cfg: Config, overrides: dict) -> Config:
    """Return a copy of ``cfg`` with flat ``"group.field": value`` overrides applied.

    Unknown groups or fields are rejected; numeric fields accept ints for floats.
    """
    out = copy.deepcopy(cfg)
    group_names = {f.name for f in fields(Config)}
    for key, value in overrides.items():
        parts = key.split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {key!r}: expected 'group.field'")
        group, name = parts
        if group not in group_names:
            raise ConfigError(f"override key {key!r}: unknown group {group!r}")
        target = getattr(out, group)
        if not hasattr(target, name):
            raise ConfigError(f"override key {key!r}: unknown field {name!r}")
        current = getattr(target, name)
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"override key {key!r}: expected bool, got {value!r}")
        elif isinstance(current, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"override key {key!r}: expected number, got {value!r}")
            value = float(value)
        elif isinstance(current, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"override key {key!r}: expected int, got {value!r}")
        elif isinstance(current, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"override key {key!r}: expected list, got {value!r}")
            value = tuple(value)
        setattr(target, name, value)
    return out
