import math

import pytest

from lowspeed.config import ArbiterParams
from lowspeed.modes import (
    ACTIONS,
    HEALTHY,
    DriverInput,
    DriverReadiness,
    Mode,
    ModeArbiter,
    SPEED_BUCKETS,
    SystemHealth,
    TorReason,
    TorState,
    available_modes,
    dump_truth_table,
    monitor_driver,
    step_arbiter,
)

from oracle_modes import expected_result

READY = DriverReadiness(True, 0.0)
INERT = DriverReadiness(False, math.inf)


# --- available_modes ------------------------------------------------------


def test_modes_on_secured_road_below_guard():
    avail = available_modes(8.33, True, HEALTHY)
    assert avail == {Mode.DRIVER, Mode.LONGI_ADAS, Mode.FULL_SYSTEM}


def test_modes_above_guard_longitudinal_only():
    avail = available_modes(19.4, True, HEALTHY)
    assert avail == {Mode.DRIVER, Mode.LONGI_ADAS}


def test_modes_on_normal_road():
    avail = available_modes(8.33, False, HEALTHY)
    assert avail == {Mode.DRIVER, Mode.LONGI_ADAS}


def test_modes_guard_is_inclusive():
    assert Mode.FULL_SYSTEM in available_modes(13.89, True, HEALTHY)
    assert Mode.FULL_SYSTEM not in available_modes(13.90, True, HEALTHY)


def test_modes_unhealthy_leaves_driver_only():
    avail = available_modes(8.33, True, SystemHealth(False, True))
    assert avail == {Mode.DRIVER}


# --- monitor_driver -------------------------------------------------------


def hist(entries):
    return [(t, DriverInput(**kw)) for t, kw in entries]


def test_monitor_all_zero_not_ready():
    h = hist([(t * 0.1, {}) for t in range(21)])
    r = monitor_driver(h, now=2.0)
    assert not r.ready
    assert r.last_activity_age == math.inf


def test_monitor_single_acknowledge():
    h = hist([(0.0, {}), (1.0, {"acknowledge": True}), (2.0, {})])
    r = monitor_driver(h, now=2.0)
    assert r.ready
    assert r.last_activity_age == pytest.approx(1.0)


def test_monitor_torque_boundary_is_strict():
    h = hist([(1.9, {"steer_torque": 0.3})])
    assert not monitor_driver(h, now=2.0).ready
    h = hist([(1.9, {"steer_torque": 0.3001})])
    assert monitor_driver(h, now=2.0).ready


def test_monitor_forgets_outside_window():
    h = hist([(0.0, {"throttle": 0.5})])
    assert monitor_driver(h, now=1.0).ready
    assert not monitor_driver(h, now=3.0).ready


# --- step_arbiter ---------------------------------------------------------


def full_avail():
    return available_modes(8.33, True, HEALTHY)


def test_disengage_returns_to_driver():
    res = step_arbiter(Mode.LONGI_ADAS, None, DriverInput(disengage_request=True),
                       READY, full_avail(), 0.0, v=8.33)
    assert res.mode is Mode.DRIVER


def test_override_returns_to_driver():
    res = step_arbiter(Mode.FULL_SYSTEM, None, DriverInput(), INERT, full_avail(),
                       0.0, v=8.33, override_active=True)
    assert res.mode is Mode.DRIVER


def test_engage_refused_with_reason():
    avail = available_modes(19.4, True, HEALTHY)
    res = step_arbiter(Mode.DRIVER, None, DriverInput(engage_request=Mode.FULL_SYSTEM),
                       READY, avail, 0.0, v=19.4)
    assert res.mode is Mode.DRIVER
    assert res.refusal == "full_system_speed_above_guard"


def test_engage_granted():
    res = step_arbiter(Mode.DRIVER, None, DriverInput(engage_request=Mode.FULL_SYSTEM),
                       READY, full_avail(), 0.0, v=8.33)
    assert res.mode is Mode.FULL_SYSTEM
    assert res.refusal is None


def test_fault_during_assist_forces_emergency():
    bad = SystemHealth(False, True)
    res = step_arbiter(Mode.FULL_SYSTEM, None, DriverInput(), READY,
                       available_modes(8.33, True, bad), 0.0, v=8.33, health=bad)
    assert res.mode is Mode.EMERGENCY


def test_fault_in_driver_mode_stays_driver():
    bad = SystemHealth(False, True)
    res = step_arbiter(Mode.DRIVER, None, DriverInput(), READY,
                       available_modes(8.33, True, bad), 0.0, v=8.33, health=bad)
    assert res.mode is Mode.DRIVER


def test_tor_issue_hold_expire():
    # secured road ends, driver inert: request issued, held, then emergency
    avail = available_modes(8.33, False, HEALTHY)
    res = step_arbiter(Mode.FULL_SYSTEM, None, DriverInput(), INERT, avail, 0.0,
                       v=8.33, secured=False)
    assert res.mode is Mode.FULL_SYSTEM
    assert res.tor is not None and res.tor.state is TorState.PENDING
    assert res.tor.reason is TorReason.SECURED_ROAD_ENDING
    assert res.tor.deadline == pytest.approx(10.0)

    mid = step_arbiter(Mode.FULL_SYSTEM, res.tor, DriverInput(), INERT, avail, 5.0,
                       v=8.33, secured=False)
    assert mid.mode is Mode.FULL_SYSTEM
    assert mid.tor.state is TorState.PENDING

    end = step_arbiter(Mode.FULL_SYSTEM, mid.tor, DriverInput(), INERT, avail, 10.01,
                       v=8.33, secured=False)
    assert end.mode is Mode.EMERGENCY
    assert end.tor.state is TorState.EXPIRED


def test_tor_acknowledged_hands_over():
    avail = available_modes(8.33, False, HEALTHY)
    res = step_arbiter(Mode.FULL_SYSTEM, None, DriverInput(), INERT, avail, 0.0,
                       v=8.33, secured=False)
    ack = step_arbiter(Mode.FULL_SYSTEM, res.tor,
                       DriverInput(acknowledge=True, steer_torque=1.0),
                       READY, avail, 3.0, v=8.33, secured=False)
    assert ack.mode is Mode.DRIVER
    assert ack.tor.state is TorState.ACKNOWLEDGED


def test_tor_engage_longi_during_handover():
    avail = available_modes(8.33, False, HEALTHY)
    res = step_arbiter(Mode.FULL_SYSTEM, None, DriverInput(), INERT, avail, 0.0,
                       v=8.33, secured=False)
    out = step_arbiter(Mode.FULL_SYSTEM, res.tor,
                       DriverInput(engage_request=Mode.LONGI_ADAS),
                       READY, avail, 3.0, v=8.33, secured=False)
    assert out.mode is Mode.LONGI_ADAS
    assert out.tor.state is TorState.ACKNOWLEDGED


def test_emergency_absorbing_until_reset_at_standstill():
    res = step_arbiter(Mode.EMERGENCY, None, DriverInput(disengage_request=True),
                       READY, full_avail(), 0.0, v=5.0)
    assert res.mode is Mode.EMERGENCY
    res = step_arbiter(Mode.EMERGENCY, None, DriverInput(), READY, full_avail(),
                       0.0, v=5.0, reset_event=True)
    assert res.mode is Mode.EMERGENCY  # still rolling
    res = step_arbiter(Mode.EMERGENCY, None, DriverInput(), READY, full_avail(),
                       0.0, v=0.0, reset_event=True)
    assert res.mode is Mode.DRIVER


def test_pending_tor_resolves_exactly_once():
    # a pending request always ends acknowledged or expired, never deleted raw
    avail = available_modes(8.33, False, HEALTHY)
    for inputs, readiness, t, want in [
        (DriverInput(acknowledge=True), READY, 2.0, TorState.ACKNOWLEDGED),
        (DriverInput(), INERT, 11.0, TorState.EXPIRED),
        (DriverInput(disengage_request=True), READY, 2.0, TorState.ACKNOWLEDGED),
    ]:
        issued = step_arbiter(Mode.FULL_SYSTEM, None, DriverInput(), INERT, avail,
                              0.0, v=8.33, secured=False)
        res = step_arbiter(Mode.FULL_SYSTEM, issued.tor, inputs, readiness, avail,
                           t, v=8.33, secured=False)
        assert res.tor.state is want


# --- ModeArbiter wrapper --------------------------------------------------


def test_arbiter_overspeed_dwell_triggers_tor():
    arb = ModeArbiter(initial=Mode.FULL_SYSTEM)
    dt = 0.02
    t = 0.0
    tor_seen = None
    for k in range(120):  # 2.4 s above the guard but inside the ceiling
        t = k * dt
        res = arb.step(DriverInput(), INERT, t, dt, v=14.2, secured=True)
        if res.tor is not None:
            tor_seen = (t, res.tor)
            break
    assert tor_seen is not None
    assert tor_seen[0] == pytest.approx(1.02, abs=0.05)
    assert tor_seen[1].reason is TorReason.SPEED_EXCEEDED


def test_arbiter_lookahead_issues_tor_before_boundary():
    arb = ModeArbiter(initial=Mode.FULL_SYSTEM)
    res = arb.step(DriverInput(), INERT, 0.0, 0.02, v=13.89, secured=True,
                   secured_time_left=11.0)
    assert res.tor is not None
    assert res.tor.reason is TorReason.SECURED_ROAD_ENDING
    assert res.mode is Mode.FULL_SYSTEM


def test_arbiter_logs_tor_outcomes():
    arb = ModeArbiter(initial=Mode.FULL_SYSTEM)
    arb.step(DriverInput(), INERT, 0.0, 0.02, v=8.33, secured=False)
    arb.step(DriverInput(acknowledge=True), READY, 1.0, 0.02, v=8.33, secured=False)
    assert [t.state for t in arb.tor_log] == [TorState.ACKNOWLEDGED]
    assert arb.mode is Mode.DRIVER


# --- truth table ----------------------------------------------------------


def test_truth_table_row_count_is_cartesian():
    rows = dump_truth_table()
    assert len(rows) == len(Mode) * len(SPEED_BUCKETS) * 2 * 2 * len(ACTIONS) * 2


def test_truth_table_never_grants_full_system_off_guard():
    for row in dump_truth_table():
        if row["result"] == "full_system":
            assert row["secured"], row
            assert row["speed_bucket"] in ("below", "at_limit"), row


def test_truth_table_results_reachable():
    # every result is an engageable mode for that cell or a safe fallback
    speeds = dict(SPEED_BUCKETS)
    for row in dump_truth_table():
        health = SystemHealth(row["health_ok"], row["health_ok"])
        avail = available_modes(speeds[row["speed_bucket"]], row["secured"], health)
        allowed = {m.value for m in avail} | {"emergency", "driver"}
        assert row["result"] in allowed, row


def test_truth_table_matches_independent_oracle():
    speeds = dict(SPEED_BUCKETS)
    rows = dump_truth_table()
    mismatches = []
    for row in rows:
        want = expected_result(row["mode"], speeds[row["speed_bucket"]],
                               row["secured"], row["health_ok"], row["action"],
                               row["ready"])
        if want != row["result"]:
            mismatches.append((row, want))
    assert mismatches == []
