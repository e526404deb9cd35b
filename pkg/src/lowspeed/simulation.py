"""The deterministic two-rate simulation loop.

World kinematics advance at a fixed 0.02 s step; the planner runs every
0.1 s with its output latched; the road supervisor runs at 1 Hz.  Commands
are computed for every vehicle from a frozen snapshot of the step's state,
then everyone integrates at once, so vehicle order never changes physics.
All randomness flows through named substreams of one scenario seed, which
makes whole runs (including trace files) byte-reproducible.
"""

import json
import math
from dataclasses import dataclass, field, replace

from .config import Config
from .control import (
    FuelState,
    SharedControlState,
    column_rate,
    eco_target,
    lateral_control,
    longitudinal_control,
    pedal_feedback,
    shared_torque,
    steer_angle_to_torque,
    update_fuel,
)
from .modes import (
    DriverInput,
    DriverReadiness,
    Mode,
    ModeArbiter,
    SystemHealth,
    TorState,
    is_activity,
)
from .perception import LaneSensor, Localizer, SensedObject, fuse, sense_objects
from .planner import PlanContext, find_lead, plan
from .rng import RngHub
from .road import (
    Command,
    SimulationIntegrityError,
    VehicleState,
    lane_center,
    speed_limit_at,
    step_vehicle,
)
from .scenario import PERSONA_ACK_DELAY, DriverSpec, Scenario
from .traffic import CONVENTIONAL_VEHICLE, IdmParams, Supervisor, idm_accel, spawn_traffic

TRACE_SCHEMA_VERSION = 1
METRICS_SCHEMA_VERSION = 1

TRACE_FIELDS = (
    "schema_version", "t", "s", "d", "v", "a", "lane", "steer", "mode",
    "tor_state", "tor_reason", "assist_torque", "driver_torque",
    "applied_torque", "override", "authority", "pedal_feedback",
    "target_speed", "advised_limit", "statutory_limit", "n_tracks",
    "n_confirmed", "lead_gap", "min_ttc", "plan_kind", "plan_feasible",
    "fuel_rate", "fuel_total", "collisions",
)

VEHICLE_LENGTH = 4.5
STATIC_LENGTH = 1.0


@dataclass
class Metrics:
    duration: float = 0.0
    throughput: float = 0.0          # vehicles/hour at the gantry
    mean_speed: float = 0.0          # m/s
    total_fuel_g: float = 0.0
    fuel_g_per_km: float = 0.0
    collisions: int = 0
    min_ttc_histogram: dict = field(default_factory=dict)
    ttc_lt_2s_exposure: float = 0.0  # vehicle-seconds below 2 s
    mode_occupancy: dict = field(default_factory=dict)
    tor_acknowledged: int = 0
    tor_expired: int = 0
    vehicle_count: int = 0

    def to_dict(self):
        return {
            "schema_version": METRICS_SCHEMA_VERSION,
            "duration_s": round(self.duration, 6),
            "throughput_veh_per_h": round(self.throughput, 3),
            "mean_speed_mps": round(self.mean_speed, 4),
            "total_fuel_g": round(self.total_fuel_g, 3),
            "fuel_g_per_km": round(self.fuel_g_per_km, 4),
            "collisions": self.collisions,
            "min_ttc_histogram": self.min_ttc_histogram,
            "ttc_lt_2s_exposure_s": round(self.ttc_lt_2s_exposure, 3),
            "mode_occupancy_s": {k: round(v, 3) for k, v in self.mode_occupancy.items()},
            "tor_outcomes": {"acknowledged": self.tor_acknowledged,
                             "expired": self.tor_expired},
            "vehicle_count": self.vehicle_count,
        }


@dataclass
class StaticObstacle:
    s: float
    d: float
    lane: int


class ScriptedDriver:
    """Persona plus timeline script, producing driver inputs each step.

    Personas answer a pending take-over request after their latency and,
    once they hold the vehicle, drive it competently (lane keeping plus
    car following through pedals and wheel torque).  The absent persona
    never reacts at all.
    """

    def __init__(self, spec, cfg: Config):
        self.persona = spec.persona
        delay = spec.ack_delay
        if delay is None:
            delay = PERSONA_ACK_DELAY[spec.persona]
        self.ack_delay = delay
        self.script = tuple(spec.script)
        self.cfg = cfg

    def inputs(self, t, mode, tor, truth, road, lead, limit):
        steer_torque = 0.0
        throttle = 0.0
        brake = 0.0
        acknowledge = False
        engage = None
        disengage = False
        reset_event = False

        if self.persona != "absent":
            if (tor is not None and tor.state is TorState.PENDING
                    and self.ack_delay is not None
                    and tor.issued_at + self.ack_delay <= t <= tor.issued_at + self.ack_delay + 0.5):
                acknowledge = True
                steer_torque = 0.6  # hands back on the wheel
            if mode in (Mode.DRIVER, Mode.LONGI_ADAS):
                steer_torque = self._competent_steer(truth, road)
            if mode is Mode.DRIVER:
                throttle, brake = self._competent_pedals(truth, lead, limit)

        for e in self.script:
            if e.t <= t < e.t + max(e.duration, 1e-9):
                if e.steer_torque:
                    steer_torque = e.steer_torque
                if e.throttle:
                    throttle = e.throttle
                if e.brake:
                    brake = e.brake
                if e.acknowledge:
                    acknowledge = True
                if e.engage is not None:
                    engage = Mode(e.engage)
                if e.disengage:
                    disengage = True
                if e.reset_emergency:
                    reset_event = True

        return DriverInput(
            steer_torque=steer_torque, throttle=throttle, brake=brake,
            engage_request=engage, disengage_request=disengage,
            acknowledge=acknowledge,
        ), reset_event

    def _competent_steer(self, truth, road):
        c = self.cfg
        seg, _ = road.segment_at(truth.s)
        kappa = seg.curvature
        steer_des = (math.atan(c.vehicle.wheelbase * kappa)
                     - c.control.k_d * (truth.d - lane_center(truth.lane, seg.lane_width))
                     - c.control.k_psi * truth.heading_err)
        torque = c.control.torque_per_rad * (steer_des - truth.steer)
        return min(max(torque, -5.0), 5.0)

    def _competent_pedals(self, truth, lead, limit):
        idm = IdmParams(a_max=self.cfg.traffic.idm_a_max,
                        b_comf=self.cfg.traffic.idm_b_comf,
                        s0=self.cfg.traffic.idm_s0,
                        t_gap=self.cfg.traffic.idm_t_gap,
                        delta=self.cfg.traffic.idm_delta,
                        floor=self.cfg.traffic.idm_floor)
        if lead is not None:
            gap, v_lead = lead
            accel = idm_accel(truth.v, v_lead, gap, idm, v_desired=limit)
        else:
            accel = idm_accel(truth.v, truth.v, 1e9, idm, v_desired=limit)
        if accel >= 0:
            return min(accel / self.cfg.vehicle.accel_max, 1.0), 0.0
        return 0.0, min(-accel / 6.0, 1.0)


class LiveDriver:
    """Driver inputs coming from a connected cockpit; zeros when stale."""

    def __init__(self, hold_s):
        self.hold_s = hold_s
        self.last = DriverInput()
        self.last_t = -math.inf
        self.pending_engage = None
        self.pending_disengage = False
        self.pending_reset = False
        self.connected = False

    def push_input(self, t, inp: DriverInput):
        self.last = inp
        self.last_t = t

    def inputs(self, t):
        base = self.last if (t - self.last_t) <= self.hold_s else DriverInput()
        inp = replace(base, engage_request=self.pending_engage,
                      disengage_request=base.disengage_request or self.pending_disengage)
        reset = self.pending_reset
        self.pending_engage = None
        self.pending_disengage = False
        self.pending_reset = False
        return inp, reset


class AutomatedAgent:
    """One automated vehicle: perception, arbitration, planning, control.

    Full-stack agents perceive the world through simulated sensors and plan
    trajectories; reduced agents (background fleet) skip the sensor and
    candidate machinery and run the same controllers on ground truth, which
    keeps penetration sweeps tractable.
    """

    def __init__(self, vid, state, cfg: Config, hub: RngHub, driver,
                 initial_mode=Mode.DRIVER, full_stack=True):
        self.vid = vid
        self.state = state
        self.cfg = cfg
        self.driver = driver
        self.full_stack = full_stack
        self.arbiter = ModeArbiter(cfg.arbiter, initial=initial_mode)
        self.lane_sensor = LaneSensor(cfg.perception, hub.stream(f"lane/{vid}"))
        self.localizer = Localizer(cfg.perception, hub.stream(f"loc/{vid}"))
        self.obj_rng = hub.stream(f"obj/{vid}")
        self.tracks = []
        self.shared = SharedControlState()
        self.fuel = FuelState()
        self.last_activity_t = -math.inf
        self.plan_result = None
        self.plan_t = 0.0
        self.plan_active_kind = None   # mode the latched plan was made for
        self.fault_until = None
        self.fault_active = False
        self.live: LiveDriver = None
        self.last_inputs = DriverInput()
        self.pedal_force = 0.0
        self.target_speed = 0.0
        self.advised_limit = None
        self.estimate = state

    # -- helpers -----------------------------------------------------------

    def _secured_time_left(self, sim, truth):
        """Seconds of secured road left ahead, by geometry or announcement."""
        road = sim.road
        left = None
        seg, u = road.segment_at(truth.s)
        if seg.secured:
            dist = seg.length - u
            idx, _ = road.segment_index_at(truth.s)
            j = idx
            for _ in range(len(road.segments)):
                j += 1
                if j >= len(road.segments):
                    if not road.closed:
                        break
                    j = 0
                nxt = road.segments[j]
                if not nxt.secured:
                    break
                dist += nxt.length
            else:
                dist = None  # secured all the way around
            if dist is not None and dist < road.total_length:
                left = dist / max(truth.v, 1.0)
        if sim.secured_flip_t is not None:
            announced = sim.secured_flip_t - sim.t
            left = announced if left is None else min(left, announced)
        return left

    def _lead_from_tracks(self, truth, road):
        lead = find_lead(truth, self.tracks, road, self.cfg.planner)
        if lead is None:
            return None
        gap = road.delta_s(lead.s, truth.s) - VEHICLE_LENGTH
        return gap, lead.v

    def _effective_targets(self, sim, est):
        road = sim.road
        statutory = speed_limit_at(est.s, road)
        advised = sim.supervisor.advised_limit_for(road.segment_at(est.s)[0].id)
        legal = statutory if advised is None else min(statutory, advised)
        target = min(legal - self.cfg.planner.speed_margin,
                     eco_target(road, est.s, self.cfg.control))
        tor = self.arbiter.tor
        if tor is not None and tor.state is TorState.PENDING:
            decayed = max(self.cfg.arbiter.tor_speed_floor,
                          target - self.cfg.arbiter.tor_speed_decay * (sim.t - tor.issued_at))
            target = min(target, decayed)
        return target, advised, statutory

    # -- main step ---------------------------------------------------------

    def compute_command(self, sim) -> Command:
        cfg = self.cfg
        dt = cfg.sim.dt
        t = sim.t
        road = sim.road
        truth = self.state

        if self.fault_until is not None and t >= self.fault_until:
            self.fault_active = False
            self.fault_until = None

        # perception
        if self.full_stack:
            est = self.localizer.estimate(truth, road)
            lane_obs = self.lane_sensor.sense(truth, road, t)
            others = [v for v in sim.vehicle_states(exclude=self.vid)]
            statics = [SensedObject(o.s, o.d, 0.0) for o in sim.statics]
            dets = sense_objects(truth, others, statics, self.obj_rng, road,
                                 cfg.perception, t)
            self.tracks = fuse(self.tracks, dets, dt, est, road, cfg.perception)
            if lane_obs.valid:
                seg, _ = road.segment_at(truth.s)
                est = replace(est,
                              d=lane_center(truth.lane, seg.lane_width) + lane_obs.lateral_offset,
                              heading_err=lane_obs.heading_err)
            else:
                est = replace(est, d=truth.d, heading_err=truth.heading_err)
            lead = self._lead_from_tracks(est, road)
        else:
            est = truth
            lead = sim.true_lead(self.vid)
        self.estimate = est

        seg_here, _ = road.segment_at(truth.s)
        secured_here = seg_here.secured and not sim.secured_flipped
        health = SystemHealth(
            perception_ok=not self.fault_active
            and not (self.plan_result is not None and self.plan_result.degraded),
            actuation_ok=True,
        )

        # driver
        if self.live is not None and self.live.connected:
            inputs, reset_event = self.live.inputs(t)
        else:
            limit = speed_limit_at(truth.s, road)
            inputs, reset_event = self.driver.inputs(
                t, self.arbiter.mode, self.arbiter.tor, truth, road, lead, limit)
        self.last_inputs = inputs
        if is_activity(inputs, cfg.arbiter):
            self.last_activity_t = t
        age = t - self.last_activity_t
        readiness = DriverReadiness(ready=age <= cfg.arbiter.monitor_window_s,
                                    last_activity_age=age)

        res = self.arbiter.step(
            inputs, readiness, t, dt,
            v=est.v, secured=secured_here, health=health,
            override_active=self.shared.override_active
            and self.arbiter.mode is Mode.FULL_SYSTEM,
            reset_event=reset_event,
            secured_time_left=self._secured_time_left(sim, truth),
        )
        mode = res.mode
        if res.refusal is not None:
            sim.note_refusal(self.vid, res.refusal, inputs.engage_request)

        target, advised, statutory = self._effective_targets(sim, est)
        self.target_speed = target
        self.advised_limit = advised

        # planner tick (latched between ticks; continuous evaluation).
        # Replans anchor to the previous reference's propagated point, not to
        # the noisy measurement: the plan is the reference the controller
        # regulates about, so it must not adopt the disturbance it corrects.
        if self.full_stack and sim.planner_tick:
            ctx = PlanContext(target_speed=target, legal_limit_cap=advised,
                              params=cfg.planner, vehicle=cfg.vehicle)
            plan_state, lat0 = self._anchor_state(sim, mode, est)
            self.plan_result = plan(plan_state, self.tracks, road, ctx, lat0)
            self.plan_t = t

        return self._control(sim, mode, inputs, est, lead, target)

    def _anchor_state(self, sim, mode, est):
        prev = None
        if (self.plan_result is not None
                and self.plan_active_kind == mode
                and mode in (Mode.FULL_SYSTEM, Mode.EMERGENCY)):
            prev = (self.plan_result.mrs if mode is Mode.EMERGENCY
                    else self.plan_result.nominal)
        self.plan_active_kind = mode
        if prev is None:
            return est, 0.0
        tick = sim.t - self.plan_t
        d0 = prev.d_at(tick)
        dd0 = prev.d_dot_at(tick)
        v0 = prev.v_at(tick)
        if abs(d0 - est.d) > 0.5 or abs(v0 - est.v) > 1.5:
            return est, 0.0  # reference diverged from reality: re-anchor
        vv = max(v0, 0.5)
        he = math.asin(min(max(dd0 / vv, -0.7), 0.7))
        return (replace(est, d=d0, heading_err=he, v=v0, a=prev.a_at(tick)),
                prev.d_ddot_at(tick))

    def _control(self, sim, mode, inputs, est, lead, target) -> Command:
        cfg = self.cfg
        dt = cfg.sim.dt
        truth = self.state
        t_on = sim.t - self.plan_t

        if mode is Mode.FULL_SYSTEM and self.full_stack and self.plan_result:
            traj = self.plan_result.nominal
            steer_des = lateral_control(est, traj, t_on, sim.road,
                                        cfg.control, cfg.vehicle)
            assist_cmd = steer_angle_to_torque(steer_des - truth.steer, cfg.control)
            self.shared = shared_torque(assist_cmd, inputs, self.shared, dt, cfg.control)
            steer_cmd = truth.steer + column_rate(self.shared.applied_torque, cfg.control) * dt
            accel = longitudinal_control(est, traj, t_on, lead, cfg.control, cfg.vehicle)
        elif mode is Mode.EMERGENCY and self.full_stack and self.plan_result:
            traj = self.plan_result.mrs
            steer_des = lateral_control(est, traj, t_on, sim.road,
                                        cfg.control, cfg.vehicle)
            assist_cmd = steer_angle_to_torque(steer_des - truth.steer, cfg.control)
            self.shared = shared_torque(assist_cmd, inputs, self.shared, dt, cfg.control)
            steer_cmd = truth.steer + column_rate(self.shared.applied_torque, cfg.control) * dt
            accel = longitudinal_control(est, traj, t_on, lead, cfg.control, cfg.vehicle)
            if truth.v < 0.05:
                accel = -1.0  # hold the brake at standstill
        elif mode in (Mode.FULL_SYSTEM, Mode.EMERGENCY):
            # reduced agent under automation: direct controllers, no torque loop
            self.shared = shared_torque(0.0, inputs, self.shared, dt, cfg.control)
            steer_cmd = self._reduced_steer(sim, truth)
            v_ref = 0.0 if mode is Mode.EMERGENCY else target
            accel = longitudinal_control(truth, None, 0.0, lead, cfg.control,
                                         cfg.vehicle, v_ref=v_ref)
            if mode is Mode.EMERGENCY and truth.v < 0.05:
                accel = -1.0
        elif mode is Mode.LONGI_ADAS:
            self.shared = shared_torque(0.0, inputs, self.shared, dt, cfg.control)
            if self.full_stack or self.live is not None:
                steer_cmd = truth.steer + column_rate(inputs.steer_torque, cfg.control) * dt
            else:
                steer_cmd = self._reduced_steer(sim, truth)
            accel = longitudinal_control(est, None, 0.0, lead, cfg.control,
                                         cfg.vehicle, v_ref=target)
            if inputs.brake > 0.05:  # the driver can always slow the car
                accel = min(accel, -6.0 * inputs.brake)
        else:  # DRIVER
            self.shared = shared_torque(0.0, inputs, self.shared, dt, cfg.control)
            steer_cmd = truth.steer + column_rate(inputs.steer_torque, cfg.control) * dt
            accel = (inputs.throttle * cfg.vehicle.accel_max
                     - inputs.brake * 6.0)
            if inputs.throttle <= 0.01 and inputs.brake <= 0.01:
                accel = -cfg.sim.manual_coast_decel if truth.v > 0 else 0.0

        recommended = min(accel, 0.5)
        self.pedal_force = pedal_feedback(recommended, inputs.throttle,
                                          cfg.control, cfg.vehicle)
        return Command(steer=steer_cmd, accel=accel)

    def _reduced_steer(self, sim, truth):
        cfg = self.cfg
        seg, _ = sim.road.segment_at(truth.s)
        return (math.atan(cfg.vehicle.wheelbase * seg.curvature)
                - cfg.control.k_d * (truth.d - lane_center(truth.lane, seg.lane_width))
                - cfg.control.k_psi * truth.heading_err)

    def after_step(self, dt):
        self.fuel = update_fuel(self.fuel, self.state.v, self.state.a,
                                self.cfg.vehicle.mass, dt, self.cfg.control)


class ConventionalAgent:
    def __init__(self, vid, state, desired_speed, cfg: Config):
        self.vid = vid
        self.state = state
        self.desired_speed = desired_speed
        self.cfg = cfg
        self.idm = IdmParams(a_max=cfg.traffic.idm_a_max, b_comf=cfg.traffic.idm_b_comf,
                             s0=cfg.traffic.idm_s0, t_gap=cfg.traffic.idm_t_gap,
                             delta=cfg.traffic.idm_delta, floor=cfg.traffic.idm_floor)
        self.fuel = FuelState()

    def compute_command(self, sim) -> Command:
        truth = self.state
        lead = sim.true_lead(self.vid)
        if lead is not None:
            gap, v_lead = lead
            accel = idm_accel(truth.v, v_lead, gap, self.idm, self.desired_speed)
        else:
            accel = idm_accel(truth.v, truth.v, 1e9, self.idm, self.desired_speed)
        seg, _ = sim.road.segment_at(truth.s)
        steer = (math.atan(self.cfg.vehicle.wheelbase * seg.curvature)
                 - 0.5 * (truth.d - lane_center(truth.lane, seg.lane_width))
                 - 1.2 * truth.heading_err)
        return Command(steer=steer, accel=accel)

    def after_step(self, dt):
        self.fuel = update_fuel(self.fuel, self.state.v, self.state.a,
                                self.cfg.vehicle.mass, dt, self.cfg.control)


class Simulation:
    """Owns the world: agents, statics, events, supervisor, metrics, trace."""

    def __init__(self, scenario: Scenario, cfg: Config = None):
        self.scenario = scenario
        self.cfg = cfg or scenario.build_config()
        self.road = scenario.road
        self.hub = RngHub(scenario.seed)
        self.t = 0.0
        self.step_index = 0
        self.paused = False
        self.supervisor = Supervisor(self.cfg.traffic)
        self.recommendations = []
        self.statics = []
        self.pending_events = list(scenario.events)
        self.secured_flip_t = None
        self.secured_flipped = False
        self.refusals = []          # (t, vid, reason, requested)
        self.planner_tick = True

        # agents: ego is always vehicle 0
        ego_state = VehicleState(
            s=scenario.ego.start_s,
            d=lane_center(scenario.ego.lane, self.road.segments[0].lane_width),
            heading_err=0.0, v=scenario.ego.v, a=0.0,
            lane=scenario.ego.lane, steer=0.0,
        )
        driver = ScriptedDriver(scenario.ego.driver, self.cfg)
        self.ego = AutomatedAgent(0, ego_state, self.cfg, self.hub, driver,
                                  initial_mode=Mode(scenario.ego.mode), full_stack=True)
        self.agents = [self.ego]

        count = scenario.traffic.count
        if scenario.traffic.density is not None:
            lanes = min(s.lane_count for s in self.road.segments)
            count = int(round(scenario.traffic.density
                              * self.road.total_length / 1000.0 * lanes))
        if count > 0:
            fleet = spawn_traffic(self.road, count, scenario.traffic.penetration,
                                  self.hub.stream("spawn"), self.cfg.traffic)
            vid = 1
            for sv in fleet:
                if (sv.state.lane == ego_state.lane
                        and abs(self.road.delta_s(sv.state.s, ego_state.s)) < 15.0):
                    continue  # leave room around the ego spawn point
                if sv.automated:
                    agent = AutomatedAgent(
                        vid, sv.state, self.cfg, self.hub,
                        ScriptedDriver(DriverSpec(persona="absent"), self.cfg),
                        initial_mode=Mode.FULL_SYSTEM,
                        full_stack=self.cfg.sim.fleet_full_stack,
                    )
                else:
                    agent = ConventionalAgent(vid, sv.state, sv.desired_speed, self.cfg)
                self.agents.append(agent)
                vid += 1

        # metrics accumulators
        self._speed_sum = 0.0
        self._speed_n = 0
        self._dist_m = 0.0
        self._ttc_hist = {self._bin_label(i): 0
                          for i in range(len(self.cfg.sim.ttc_bins) + 1)}
        self._ttc_exposure = 0.0
        self._mode_occ = {m.value: 0.0 for m in Mode}
        self._collisions = 0
        self._contact_pairs = set()
        self._gantry = (self.cfg.sim.gantry_s if self.cfg.sim.gantry_s >= 0
                        else self.road.total_length / 2.0)
        self._gantry_count = 0
        self.trace_rows = []
        self.on_snapshot = None      # callable(dict), set by the telemetry server
        self.on_refusal = None       # callable(dict), ditto
        self.inbound = None          # queue of command dicts

    # -- world queries -------------------------------------------------------

    def vehicle_states(self, exclude=None):
        return [a.state for a in self.agents if a.vid != exclude]

    def _build_lead_map(self):
        """(bumper gap, speed) of the nearest in-lane object ahead, per vehicle.

        Built once per step by sorting each lane, instead of n^2 pair scans.
        """
        by_lane = {}
        for a in self.agents:
            by_lane.setdefault(a.state.lane, []).append(
                (a.state.s, VEHICLE_LENGTH, a.state.v, a.vid))
        for obs in self.statics:
            by_lane.setdefault(obs.lane, []).append(
                (obs.s, STATIC_LENGTH, 0.0, None))
        leads = {}
        L = self.road.total_length
        for lane, ents in by_lane.items():
            ents.sort()
            n = len(ents)
            for i, (s, length, _v, vid) in enumerate(ents):
                if vid is None:
                    continue
                lead = None
                if self.road.closed and n > 1:
                    lead = ents[(i + 1) % n]
                elif i + 1 < n:
                    lead = ents[i + 1]
                if lead is None or lead[3] == vid:
                    continue
                ds = (lead[0] - s) % L if self.road.closed else lead[0] - s
                gap = ds - 0.5 * (length + lead[1])
                leads[vid] = (gap, lead[2])
        self._lead_map = leads

    def true_lead(self, vid):
        return self._lead_map.get(vid)

    def note_refusal(self, vid, reason, requested):
        req = requested.value if requested else None
        self.refusals.append((self.t, vid, reason, req))
        if self.on_refusal is not None and vid == 0:
            self.on_refusal({"type": "refusal", "t": round(self.t, 4),
                             "reason": reason, "requested": req})

    # -- events ----------------------------------------------------------------

    def _apply_events(self):
        while self.pending_events and self.pending_events[0].t <= self.t + 1e-9:
            ev = self.pending_events.pop(0)
            if ev.type == "obstacle_spawn":
                s = ev.s if ev.s is not None else self.road.wrap_s(
                    self.ego.state.s + ev.ahead)
                seg, _ = self.road.segment_at(s)
                self.statics.append(StaticObstacle(
                    s=s, d=lane_center(ev.lane, seg.lane_width), lane=ev.lane))
            elif ev.type == "sensor_fault":
                self.ego.fault_active = True
                self.ego.fault_until = ev.restore_t
            elif ev.type == "secured_end_override":
                notice = ev.notice
                if notice is None:
                    notice = (self.cfg.arbiter.tor_deadline_s
                              + self.cfg.arbiter.tor_lookahead_margin_s)
                self.secured_flip_t = self.t + notice

    # -- stepping ----------------------------------------------------------------

    def step_once(self):
        cfg = self.cfg
        dt = cfg.sim.dt
        self._apply_events()
        if self.inbound is not None:
            self._drain_inbound()
        if self.secured_flip_t is not None and self.t >= self.secured_flip_t:
            self.secured_flipped = True

        if self.step_index % max(1, round(cfg.sim.supervisor_period_s / dt)) == 0:
            reports = []
            for a in self.agents:
                seg, _ = self.road.segment_at(a.state.s)
                if isinstance(a, AutomatedAgent):
                    reports.append((a.vid, seg.id, a.state.v))
                elif seg.instrumented:
                    reports.append((a.vid, seg.id, a.state.v))
            self.recommendations = self.supervisor.step(reports, self.road, self.t)

        self.planner_tick = self.step_index % max(1, round(cfg.planner.tick_s / dt)) == 0

        self._build_lead_map()
        commands = [a.compute_command(self) for a in self.agents]
        for agent, cmd in zip(self.agents, commands):
            params = (cfg.vehicle if isinstance(agent, AutomatedAgent)
                      else CONVENTIONAL_VEHICLE)
            agent.state = step_vehicle(agent.state, cmd, dt, self.road, params)
            agent.after_step(dt)

        self._check_collisions()
        self._accumulate_metrics(dt)
        self._assert_mode_safety()
        if self.ego is not None:
            self.trace_rows.append(self._trace_row())
        if self.on_snapshot is not None and self._snapshot_due():
            self.on_snapshot(self.snapshot())

        self.step_index += 1
        self.t = self.step_index * dt

    def run(self, n_steps=None):
        total = n_steps if n_steps is not None else int(round(
            self.scenario.duration / self.cfg.sim.dt))
        for _ in range(total):
            self.step_once()
        return self.metrics()

    # -- inbound commands (interactive sessions) ---------------------------------

    def _drain_inbound(self):
        live = self.ego.live
        while True:
            try:
                msg = self.inbound.get_nowait()
            except Exception:
                break
            mtype = msg.get("type")
            if live is None:
                continue
            if mtype == "driver_input":
                live.push_input(self.t, DriverInput(
                    steer_torque=float(msg.get("steer_torque", 0.0)),
                    throttle=float(msg.get("throttle", 0.0)),
                    brake=float(msg.get("brake", 0.0)),
                    acknowledge=bool(msg.get("acknowledge", False)),
                ))
            elif mtype == "engage":
                try:
                    live.pending_engage = Mode(msg.get("mode", ""))
                except ValueError:
                    self.note_refusal(0, "unknown_mode", None)
            elif mtype == "disengage":
                live.pending_disengage = True
            elif mtype == "reset_emergency":
                live.pending_reset = True
            elif mtype == "pause":
                self.paused = bool(msg.get("paused", False))

    # -- collisions / metrics ------------------------------------------------------

    def _check_collisions(self):
        entities = [(a.vid, a.state.s, a.state.lane, VEHICLE_LENGTH)
                    for a in self.agents]
        entities += [(f"static{i}", o.s, o.lane, STATIC_LENGTH)
                     for i, o in enumerate(self.statics)]
        by_lane = {}
        for ent in entities:
            by_lane.setdefault(ent[2], []).append(ent)
        for lane, ents in by_lane.items():
            ents.sort(key=lambda e: e[1])
            for i in range(len(ents)):
                a = ents[i]
                b = ents[(i + 1) % len(ents)] if self.road.closed else None
                if not self.road.closed and i + 1 < len(ents):
                    b = ents[i + 1]
                if b is None or a[0] == b[0]:
                    continue
                gap = (b[1] - a[1]) % self.road.total_length if self.road.closed \
                    else b[1] - a[1]
                gap -= 0.5 * (a[3] + b[3])
                pair = (a[0], b[0])
                if gap <= 0.0:
                    if pair not in self._contact_pairs:
                        self._contact_pairs.add(pair)
                        self._collisions += 1
                else:
                    self._contact_pairs.discard(pair)

    def _bin_label(self, i):
        bins = self.cfg.sim.ttc_bins
        if i == 0:
            return f"<{bins[0]}"
        if i == len(bins):
            return f">={bins[-1]}"
        return f"{bins[i-1]}-{bins[i]}"

    def _accumulate_metrics(self, dt):
        self._build_lead_map()  # gaps moved during integration
        bins = self.cfg.sim.ttc_bins
        for a in self.agents:
            self._speed_sum += a.state.v
            self._speed_n += 1
            self._dist_m += a.state.v * dt
            lead = self.true_lead(a.vid)
            if lead is not None:
                gap, v_lead = lead
                closing = a.state.v - v_lead
                if gap > 0 and closing > 0.1:
                    ttc = gap / closing
                    idx = 0
                    while idx < len(bins) and ttc >= bins[idx]:
                        idx += 1
                    self._ttc_hist[self._bin_label(idx)] += 1
                    if ttc < 2.0:
                        self._ttc_exposure += dt
            if isinstance(a, AutomatedAgent):
                self._mode_occ[a.arbiter.mode.value] += dt
            prev_s = a.state.s - a.state.v * dt
            g = self._gantry
            if prev_s < g <= a.state.s or (
                    self.road.closed and prev_s > a.state.s and
                    (prev_s < g or g <= a.state.s)):
                self._gantry_count += 1

    def _assert_mode_safety(self):
        limit = self.cfg.arbiter.full_speed_max + self.cfg.arbiter.speed_hysteresis
        for a in self.agents:
            if not isinstance(a, AutomatedAgent):
                continue
            if a.arbiter.mode is Mode.FULL_SYSTEM:
                seg, _ = self.road.segment_at(a.state.s)
                secured = seg.secured and not self.secured_flipped
                if not secured or a.state.v > limit:
                    tail = "\n".join(",".join(r) for r in self.trace_rows[-10:])
                    raise SimulationIntegrityError(
                        f"mode safety violated at t={self.t:.2f} vid={a.vid}: "
                        f"secured={secured} v={a.state.v:.2f}\nlast rows:\n{tail}")

    # -- outputs --------------------------------------------------------------------

    def _trace_row(self):
        a = self.ego
        tor = a.arbiter.tor
        lead = a._lead_from_tracks(a.estimate, self.road) if a.full_stack else None
        min_ttc = ""
        if lead is not None:
            gap, v_lead = lead
            closing = a.state.v - v_lead
            if gap > 0 and closing > 0.1:
                min_ttc = f"{gap / closing:.6f}"
        pr = a.plan_result
        seg, _ = self.road.segment_at(a.state.s)
        vals = {
            "schema_version": str(TRACE_SCHEMA_VERSION),
            "t": f"{self.t:.6f}",
            "s": f"{a.state.s:.6f}",
            "d": f"{a.state.d:.6f}",
            "v": f"{a.state.v:.6f}",
            "a": f"{a.state.a:.6f}",
            "lane": str(a.state.lane),
            "steer": f"{a.state.steer:.6f}",
            "mode": a.arbiter.mode.value,
            "tor_state": tor.state.value if tor else "",
            "tor_reason": tor.reason.value if tor else "",
            "assist_torque": f"{a.shared.assist_torque:.6f}",
            "driver_torque": f"{a.shared.driver_torque:.6f}",
            "applied_torque": f"{a.shared.applied_torque:.6f}",
            "override": "1" if a.shared.override_active else "0",
            "authority": f"{a.shared.authority:.6f}",
            "pedal_feedback": f"{a.pedal_force:.6f}",
            "target_speed": f"{a.target_speed:.6f}",
            "advised_limit": f"{a.advised_limit:.6f}" if a.advised_limit else "",
            "statutory_limit": f"{seg.speed_limit:.6f}",
            "n_tracks": str(len(a.tracks)),
            "n_confirmed": str(sum(t.confirmed for t in a.tracks)),
            "lead_gap": f"{lead[0]:.6f}" if lead else "",
            "min_ttc": min_ttc,
            "plan_kind": pr.nominal.kind.value if pr else "",
            "plan_feasible": str(pr.feasible_count) if pr else "",
            "fuel_rate": f"{a.fuel.rate:.6f}",
            "fuel_total": f"{a.fuel.cumulative:.6f}",
            "collisions": str(self._collisions),
        }
        return [vals[k] for k in TRACE_FIELDS]

    def write_trace(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(TRACE_FIELDS) + "\n")
            for row in self.trace_rows:
                fh.write(",".join(row) + "\n")

    def metrics(self) -> Metrics:
        duration = self.t
        total_fuel = sum(a.fuel.cumulative for a in self.agents)
        ack = sum(1 for a in self.agents if isinstance(a, AutomatedAgent)
                  for t in a.arbiter.tor_log if t.state is TorState.ACKNOWLEDGED)
        exp = sum(1 for a in self.agents if isinstance(a, AutomatedAgent)
                  for t in a.arbiter.tor_log if t.state is TorState.EXPIRED)
        km = self._dist_m / 1000.0
        return Metrics(
            duration=duration,
            throughput=self._gantry_count * 3600.0 / duration if duration > 0 else 0.0,
            mean_speed=self._speed_sum / self._speed_n if self._speed_n else 0.0,
            total_fuel_g=total_fuel,
            fuel_g_per_km=total_fuel / km if km > 0 else 0.0,
            collisions=self._collisions,
            min_ttc_histogram=dict(self._ttc_hist),
            ttc_lt_2s_exposure=self._ttc_exposure,
            mode_occupancy=dict(self._mode_occ),
            tor_acknowledged=ack,
            tor_expired=exp,
            vehicle_count=len(self.agents),
        )

    def _snapshot_due(self):
        period = self.cfg.sim.snapshot_period_s
        return math.floor(self.t / period) != math.floor((self.t - self.cfg.sim.dt) / period)

    def snapshot(self) -> dict:
        """Immutable telemetry frame with everything the cockpit renders."""
        a = self.ego
        tor = a.arbiter.tor
        pr = a.plan_result

        def poly(traj):
            if traj is None:
                return None
            pts = []
            t = 0.0
            while t <= traj.horizon + 1e-9:
                pts.append([round(traj.s_at(t), 3), round(traj.d_at(t), 3)])
                t += 0.2
            return pts

        mode = a.arbiter.mode
        return {
            "type": "snapshot",
            "schema_version": 1,
            "t": round(self.t, 4),
            "paused": self.paused,
            "ego": {
                "s": round(a.state.s, 3), "d": round(a.state.d, 3),
                "v": round(a.state.v, 3), "a": round(a.state.a, 3),
                "lane": a.state.lane, "steer": round(a.state.steer, 4),
                "mode": mode.value,
                "tor": {
                    "issued_at": round(tor.issued_at, 3),
                    "deadline": round(tor.deadline, 3),
                    "reason": tor.reason.value,
                    "state": tor.state.value,
                } if tor else None,
                "shared": {
                    "assist": round(a.shared.assist_torque, 3),
                    "driver": round(a.shared.driver_torque, 3),
                    "applied": round(a.shared.applied_torque, 3),
                    "override": a.shared.override_active,
                    "pedal_feedback": round(a.pedal_force, 2),
                },
                "target_speed": round(a.target_speed, 3),
                "advised_limit": round(a.advised_limit, 3) if a.advised_limit else None,
                "trajectory": poly(pr.nominal) if pr and mode in
                (Mode.FULL_SYSTEM, Mode.EMERGENCY) else None,
                "mrs": poly(pr.mrs) if pr else None,
                "tracks": [
                    {"id": trk.id, "s": round(trk.s, 3), "d": round(trk.d, 3),
                     "v": round(trk.v, 3), "confirmed": trk.confirmed}
                    for trk in a.tracks
                ],
            },
            "vehicles": [
                {"id": v.vid, "kind": "automated" if isinstance(v, AutomatedAgent)
                 else "conventional",
                 "s": round(v.state.s, 3), "d": round(v.state.d, 3),
                 "v": round(v.state.v, 3), "lane": v.state.lane,
                 "mode": v.arbiter.mode.value if isinstance(v, AutomatedAgent) else None}
                for v in self.agents
            ],
            "statics": [{"s": round(o.s, 3), "d": round(o.d, 3), "lane": o.lane}
                        for o in self.statics],
            "recommendations": [
                {"segment_id": r.segment_id, "advised_limit": r.advised_limit,
                 "issued_at": round(r.issued_at, 3), "ttl": r.ttl}
                for r in self.recommendations
            ],
            "metrics": {
                "collisions": self._collisions,
                "mean_speed": round(self._speed_sum / self._speed_n, 3)
                if self._speed_n else 0.0,
                "fuel_g": round(sum(x.fuel.cumulative for x in self.agents), 2),
            },
        }

    def map_payload(self) -> dict:
        """Static geometry for the cockpit, sent once per connection."""
        segs = []
        for i, seg in enumerate(self.road.segments):
            x, y, psi = self.road._poses[i]
            segs.append({
                "id": seg.id, "length": seg.length, "curvature": seg.curvature,
                "lane_count": seg.lane_count, "lane_width": seg.lane_width,
                "speed_limit": seg.speed_limit, "secured": seg.secured,
                "has_emergency_lane": seg.has_emergency_lane,
                "start": [round(x, 3), round(y, 3), round(psi, 5)],
            })
        return {"type": "map", "closed": self.road.closed,
                "total_length": self.road.total_length, "segments": segs}


def run_scenario(scenario: Scenario, trace_path=None, metrics_path=None,
                 cfg: Config = None):
    sim = Simulation(scenario, cfg)
    metrics = sim.run()
    if trace_path is not None:
        sim.write_trace(trace_path)
    if metrics_path is not None:
        with open(metrics_path, "w", encoding="utf-8") as fh:
            json.dump(metrics.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return sim, metrics
