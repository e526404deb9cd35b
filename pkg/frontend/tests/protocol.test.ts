// End-to-end protocol tests against the real simulation server.
// These spawn `python3 -m lowspeed.cli run --serve` from the repo root, so
// the Python package must be importable (pip install -e ..).

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterEach, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { CockpitClient } from "../src/net.js";
import type { Snapshot } from "../src/types.js";

const REPO = resolve(__dirname, "..", "..");
const SCENARIOS = join(REPO, "scenarios");

let procs: ChildProcess[] = [];

afterEach(() => {
  for (const p of procs) p.kill("SIGKILL");
  procs = [];
});

function startServer(scenario: string, rtFactor: number): Promise<number> {
  const port = 20000 + Math.floor(Math.random() * 20000);
  const proc = spawn(
    "python3",
    ["-u", "-m", "lowspeed.cli", "run", "--scenario", scenario,
     "--serve", String(port), "--rt-factor", String(rtFactor)],
    { cwd: REPO, stdio: ["ignore", "pipe", "pipe"] },
  );
  procs.push(proc);
  return new Promise((resolvePort, reject) => {
    const timer = setTimeout(() => reject(new Error("server did not start")), 20000);
    proc.stdout!.on("data", (chunk: Buffer) => {
      if (chunk.toString().includes("serving telemetry")) {
        clearTimeout(timer);
        resolvePort(port);
      }
    });
    proc.stderr!.on("data", (chunk: Buffer) => {
      const text = chunk.toString();
      if (text.includes("Traceback")) {
        clearTimeout(timer);
        reject(new Error(`server crashed:\n${text}`));
      }
    });
  });
}

function connect(port: number, driver: boolean): CockpitClient {
  return new CockpitClient(
    `ws://127.0.0.1:${port}`,
    driver,
    (url) => new WebSocket(url) as never,
  );
}

function waitFor<T>(
  probe: () => T | null | undefined | false,
  timeoutMs: number,
  what: string,
): Promise<T> {
  const t0 = Date.now();
  return new Promise((resolveVal, reject) => {
    const timer = setInterval(() => {
      const got = probe();
      if (got) {
        clearInterval(timer);
        resolveVal(got);
      } else if (Date.now() - t0 > timeoutMs) {
        clearInterval(timer);
        reject(new Error(`timed out waiting for ${what}`));
      }
    }, 10);
  });
}

function freeRoadScenario(): string {
  const dir = mkdtempSync(join(tmpdir(), "cockpit-"));
  const path = join(dir, "free_road.json");
  writeFileSync(path, JSON.stringify({
    schema_version: 1,
    name: "free_road",
    seed: 2,
    duration: 120.0,
    map: { segments: [{ id: 0, length: 3000.0, lane_count: 2, lane_width: 3.5,
                        curvature: 0.0, speed_limit: 13.89, secured: true,
                        has_emergency_lane: true, marking_quality: 1.0 }] },
    ego: { start_s: 0.0, lane: 0, v: 8.0, mode: "driver",
           driver: { persona: "absent" } },
    traffic: { count: 0, penetration: 0.0 },
    events: [],
    config: {},
  }));
  return path;
}

describe("cockpit against the live server", () => {
  it("engage below the guard is accepted, above it refused with feedback", async () => {
    const port = await startServer(freeRoadScenario(), 8);
    const client = connect(port, true);
    await waitFor(() => client.role === "driver" && client.snapshot, 10000, "driver session");

    // below 50 km/h: accepted
    client.engage("full_system");
    await waitFor(() => client.snapshot?.ego.mode === "full_system", 10000,
                  "full delegation engaged");
    expect(client.notices.filter((n) => n.kind === "refusal")).toHaveLength(0);

    // hand back, speed up beyond the guard, try again: refused and visible
    client.disengage();
    await waitFor(() => client.snapshot?.ego.mode === "driver", 10000, "handback");
    const push = setInterval(() => client.sendInput({
      type: "driver_input", steer_torque: 0, throttle: 1.0, brake: 0, acknowledge: false,
    }), 20);
    try {
      await waitFor(() => (client.snapshot?.ego.v ?? 0) > 14.2, 20000, "overspeed");
    } finally {
      clearInterval(push);
    }
    client.engage("full_system");
    const notice = await waitFor(
      () => client.notices.find((n) => n.kind === "refusal"), 10000, "refusal notice");
    expect(notice.text).toContain("full_system");
    expect(client.snapshot?.ego.mode).toBe("driver");

    // the notice is dismissible
    client.dismissNotice(client.notices.indexOf(notice));
    expect(client.notices).not.toContain(notice);
    client.close();
  }, 90000);

  it("acknowledging a take-over request resolves it within two world steps", async () => {
    const port = await startServer(join(SCENARIOS, "zone_end_absent.json"), 2);
    const client = connect(port, true);
    await waitFor(() => client.role === "driver" && client.snapshot, 10000, "driver session");

    const pending = await waitFor(
      () => client.snapshot?.ego.tor?.state === "pending" ? client.snapshot : null,
      30000, "pending take-over request");
    const tRef = pending.t;

    const push = setInterval(() => client.sendInput({
      type: "driver_input", steer_torque: 0.6, throttle: 0, brake: 0, acknowledge: true,
    }), 20);
    let resolved: Snapshot;
    try {
      resolved = await waitFor(
        () => client.snapshot?.ego.mode === "driver" ? client.snapshot : null,
        10000, "handover");
    } finally {
      clearInterval(push);
    }
    // observation granularity: one 0.05 s snapshot period around the send,
    // plus the two-step application contract
    expect(resolved.t - tRef).toBeLessThanOrEqual(0.05 + 2 * 0.02 + 0.06);
    client.close();
  }, 90000);

  it("disconnecting the driver mid-request reproduces the emergency stop", async () => {
    const port = await startServer(join(SCENARIOS, "zone_end_absent.json"), 6);
    const driver = connect(port, true);
    await waitFor(() => driver.role === "driver" && driver.snapshot, 10000, "driver session");
    await waitFor(() => driver.snapshot?.ego.tor?.state === "pending", 30000,
                  "pending take-over request");
    driver.close(); // inert driver from here on

    const viewer = connect(port, false);
    await waitFor(() => viewer.snapshot, 10000, "viewer session");
    const final = await waitFor(
      () => {
        const ego = viewer.snapshot?.ego;
        return ego && ego.mode === "emergency" && ego.v === 0 ? viewer.snapshot : null;
      },
      60000, "emergency stop at standstill");
    // stopped on the emergency-lane center, as in the scripted variant
    expect(Math.abs(final.ego.d - -3.5)).toBeLessThan(0.3);
    viewer.close();
  }, 120000);
});
