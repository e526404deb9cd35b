"""Mode arbitration between driver and automation.

Four modes: the driver in full control, longitudinal-only assistance,
full delegation (secured roads below the 50 km/h guard only), and an
emergency stop state.  Full delegation is never dropped on the floor: when
it becomes unavailable the arbiter issues a take-over request with a
deadline, keeps control while the request is pending, and falls back to
the emergency stop if the driver never reacts.
"""

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

from .config import ArbiterParams


class Mode(str, enum.Enum):
    DRIVER = "driver"
    LONGI_ADAS = "longi_adas"
    FULL_SYSTEM = "full_system"
    EMERGENCY = "emergency"


class TorReason(str, enum.Enum):
    SECURED_ROAD_ENDING = "secured_road_ending"
    SPEED_EXCEEDED = "speed_exceeded"
    SYSTEM_FAULT = "system_fault"
    SUPERVISOR_ORDER = "supervisor_order"


class TorState(str, enum.Enum):
    PENDING = "pending"
    ACKNOWLEDGED = "acknowledged"
    EXPIRED = "expired"


@dataclass(frozen=True)
class DriverInput:
    steer_torque: float = 0.0          # N*m
    throttle: float = 0.0              # [0, 1]
    brake: float = 0.0                 # [0, 1]
    engage_request: Optional[Mode] = None
    disengage_request: bool = False
    acknowledge: bool = False


@dataclass(frozen=True)
class DriverReadiness:
    ready: bool
    last_activity_age: float           # s; large when never active


@dataclass(frozen=True)
class TakeOverRequest:
    issued_at: float
    deadline: float
    reason: TorReason
    state: TorState = TorState.PENDING


@dataclass(frozen=True)
class SystemHealth:
    perception_ok: bool = True
    actuation_ok: bool = True

    @property
    def ok(self) -> bool:
        return self.perception_ok and self.actuation_ok


HEALTHY = SystemHealth()


def available_modes(v: float, secured: bool, health: SystemHealth,
                    params: ArbiterParams = None) -> frozenset:
    """Engageable modes at the given speed/road/health.

    The emergency state is always reachable autonomously but is never
    offered for engagement, so it is not part of the returned set.
    """
    p = params or _DEFAULTS
    avail = {Mode.DRIVER}
    if health.ok:
        avail.add(Mode.LONGI_ADAS)
        if secured and v <= p.full_speed_max:
            avail.add(Mode.FULL_SYSTEM)
    return frozenset(avail)


def is_activity(inp: DriverInput, p: ArbiterParams = None) -> bool:
    """Does this sample count as the driver being at the controls?"""
    p = p or _DEFAULTS
    return (
        abs(inp.steer_torque) > p.torque_activity
        or inp.throttle > p.pedal_activity
        or inp.brake > p.pedal_activity
        or inp.acknowledge
    )


_is_activity = is_activity


def monitor_driver(history, now: float, params: ArbiterParams = None) -> DriverReadiness:
    """Driver readiness from a time window of inputs.

    history: iterable of (t, DriverInput).  Ready when any sample inside the
    window shows steering torque, pedal work, or an acknowledge press.
    """
    p = params or _DEFAULTS
    last_activity = -math.inf
    for t, inp in history:
        if now - t <= p.monitor_window_s and _is_activity(inp, p):
            last_activity = max(last_activity, t)
    if last_activity == -math.inf:
        return DriverReadiness(ready=False, last_activity_age=math.inf)
    return DriverReadiness(ready=True, last_activity_age=now - last_activity)


class ArbiterStep(NamedTuple):
    mode: Mode
    tor: Optional[TakeOverRequest]
    refusal: Optional[str]


def step_arbiter(
    mode: Mode,
    tor: Optional[TakeOverRequest],
    inputs: DriverInput,
    readiness: DriverReadiness,
    avail: frozenset,
    t: float,
    *,
    v: float = 0.0,
    secured: bool = True,
    health: SystemHealth = HEALTHY,
    override_active: bool = False,
    reset_event: bool = False,
    tor_reason_hint: Optional[TorReason] = None,
    overspeed_sustained: bool = False,
    params: ArbiterParams = None,
) -> ArbiterStep:
    """One arbitration step.  Transition rules in priority order:

    1. emergency is absorbing until standstill plus an operator reset
    2. a health fault during assistance forces the emergency stop
    3. disengage or a sustained steering override hands back to the driver
    4. full delegation past its speed ceiling forces the emergency stop
    5. full delegation losing its preconditions issues/holds a take-over
       request; acknowledged -> driver, deadline passed -> emergency
    6. an engage request for an available mode is granted, otherwise
       refused with a reason code
    """
    p = params or _DEFAULTS
    refusal = None

    # 1. emergency latch
    if mode is Mode.EMERGENCY:
        if reset_event and v <= 0.01:
            return ArbiterStep(Mode.DRIVER, tor, None)
        if inputs.engage_request is not None:
            refusal = "emergency_active"
        return ArbiterStep(Mode.EMERGENCY, tor, refusal)

    # 2. health fault while the automation holds any authority
    if mode in (Mode.LONGI_ADAS, Mode.FULL_SYSTEM) and not health.ok:
        if tor is not None and tor.state is TorState.PENDING:
            tor = replace(tor, state=TorState.EXPIRED)
        return ArbiterStep(Mode.EMERGENCY, tor, None)

    # 3. driver takes back control
    if mode in (Mode.LONGI_ADAS, Mode.FULL_SYSTEM) and (
        inputs.disengage_request or override_active
    ):
        if tor is not None and tor.state is TorState.PENDING:
            tor = replace(tor, state=TorState.ACKNOWLEDGED)
        return ArbiterStep(Mode.DRIVER, tor, None)

    # 4. hard speed ceiling on full delegation (normally unreachable: the
    #    automation caps its own setpoint below the guard)
    if mode is Mode.FULL_SYSTEM and v > p.full_speed_max + p.speed_hysteresis:
        if tor is not None and tor.state is TorState.PENDING:
            tor = replace(tor, state=TorState.EXPIRED)
        return ArbiterStep(Mode.EMERGENCY, tor, None)

    # 5. take-over request lifecycle
    if mode is Mode.FULL_SYSTEM:
        need_tor = (not secured) or overspeed_sustained or tor_reason_hint is not None
        if tor is None and need_tor:
            reason = tor_reason_hint
            if reason is None:
                reason = (TorReason.SPEED_EXCEEDED if secured
                          else TorReason.SECURED_ROAD_ENDING)
            tor = TakeOverRequest(issued_at=t, deadline=t + p.tor_deadline_s,
                                  reason=reason)
        if tor is not None and tor.state is TorState.PENDING:
            takes_control = readiness.ready and (
                _is_activity(inputs, p) or inputs.engage_request is Mode.LONGI_ADAS
            )
            if takes_control:
                tor = replace(tor, state=TorState.ACKNOWLEDGED)
                if inputs.engage_request is Mode.LONGI_ADAS and Mode.LONGI_ADAS in avail:
                    return ArbiterStep(Mode.LONGI_ADAS, tor, None)
                return ArbiterStep(Mode.DRIVER, tor, None)
            if t > tor.deadline:
                tor = replace(tor, state=TorState.EXPIRED)
                return ArbiterStep(Mode.EMERGENCY, tor, None)
            # hold full delegation while the request is pending
            return ArbiterStep(Mode.FULL_SYSTEM, tor, None)

    # 6. engage requests
    if inputs.engage_request is not None and inputs.engage_request is not mode:
        want = inputs.engage_request
        if want in avail:
            return ArbiterStep(want, tor, None)
        if want is Mode.FULL_SYSTEM:
            if not secured:
                refusal = "full_system_requires_secured_road"
            elif v > p.full_speed_max:
                refusal = "full_system_speed_above_guard"
            else:
                refusal = "full_system_unavailable"
        else:
            refusal = f"{want.value}_unavailable"

    return ArbiterStep(mode, tor, refusal)


class ModeArbiter:
    """Stateful wrapper advanced once per simulation step.

    Owns the mode, the pending take-over request, the overspeed dwell timer
    and the take-over lookahead, so the pure transition function stays free
    of timers.
    """

    def __init__(self, params: ArbiterParams = None, initial: Mode = Mode.DRIVER):
        self.p = params or _DEFAULTS
        self.mode = initial
        self.tor: Optional[TakeOverRequest] = None
        self.overspeed_dwell = 0.0
        self.last_refusal: Optional[str] = None
        self.tor_log = []          # resolved requests, for metrics

    def step(
        self,
        inputs: DriverInput,
        readiness: DriverReadiness,
        t: float,
        dt: float,
        *,
        v: float,
        secured: bool,
        health: SystemHealth = HEALTHY,
        override_active: bool = False,
        reset_event: bool = False,
        secured_time_left: Optional[float] = None,
    ) -> ArbiterStep:
        if self.mode is Mode.FULL_SYSTEM and v > self.p.full_speed_max:
            self.overspeed_dwell += dt
        else:
            self.overspeed_dwell = 0.0

        hint = None
        if self.mode is Mode.FULL_SYSTEM and self.tor is None:
            if (secured_time_left is not None
                    and secured_time_left <= self.p.tor_deadline_s + self.p.tor_lookahead_margin_s):
                hint = TorReason.SECURED_ROAD_ENDING

        avail = available_modes(v, secured, health, self.p)
        res = step_arbiter(
            self.mode, self.tor, inputs, readiness, avail, t,
            v=v, secured=secured, health=health,
            override_active=override_active, reset_event=reset_event,
            tor_reason_hint=hint,
            overspeed_sustained=self.overspeed_dwell > self.p.overspeed_dwell_s,
            params=self.p,
        )
        if res.tor is not None and res.tor.state is not TorState.PENDING and (
            self.tor is None or self.tor.state is TorState.PENDING
        ):
            self.tor_log.append(res.tor)
        self.mode = res.mode
        self.tor = res.tor if res.tor is not None and res.tor.state is TorState.PENDING else None
        self.last_refusal = res.refusal
        return res


SPEED_BUCKETS = (("below", 8.33), ("at_limit", 13.89), ("above", 19.44))
ACTIONS = ("none", "disengage", "engage_longi", "engage_full", "acknowledge", "override")


def _inputs_for(action: str) -> DriverInput:
    if action == "disengage":
        return DriverInput(disengage_request=True)
    if action == "engage_longi":
        return DriverInput(engage_request=Mode.LONGI_ADAS)
    if action == "engage_full":
        return DriverInput(engage_request=Mode.FULL_SYSTEM)
    if action == "acknowledge":
        return DriverInput(acknowledge=True)
    if action == "override":
        return DriverInput(steer_torque=3.0)
    return DriverInput()


def dump_truth_table(params: ArbiterParams = None):
    """Exhaustive transition table over (mode, speed, secured, health, action,
    readiness) cells.

    Cells that would leave a take-over request pending are collapsed to the
    request's outcome (handover or expiry), so every row shows where the
    system settles.  Deterministic; row order is the enumeration order.
    """
    p = params or _DEFAULTS
    rows = []
    for mode in Mode:
        for bucket, v in SPEED_BUCKETS:
            for secured in (True, False):
                for health_ok in (True, False):
                    for action in ACTIONS:
                        for ready in (True, False):
                            health = SystemHealth(health_ok, health_ok)
                            inputs = _inputs_for(action)
                            readiness = DriverReadiness(ready, 0.0 if ready else math.inf)
                            avail = available_modes(v, secured, health, p)
                            res = step_arbiter(
                                mode, None, inputs, readiness, avail, 0.0,
                                v=v, secured=secured, health=health,
                                override_active=(action == "override"),
                                params=p,
                            )
                            if res.tor is not None and res.tor.state is TorState.PENDING:
                                res = step_arbiter(
                                    res.mode, res.tor, inputs, readiness, avail,
                                    res.tor.deadline + 1e-6,
                                    v=v, secured=secured, health=health,
                                    override_active=(action == "override"),
                                    params=p,
                                )
                            rows.append({
                                "mode": mode.value,
                                "speed_bucket": bucket,
                                "secured": secured,
                                "health_ok": health_ok,
                                "action": action,
                                "ready": ready,
                                "result": res.mode.value,
                            })
    return rows


TRUTH_TABLE_FIELDS = ("mode", "speed_bucket", "secured", "health_ok", "action",
                      "ready", "result")

_DEFAULTS = ArbiterParams()
