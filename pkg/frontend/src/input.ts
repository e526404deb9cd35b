// Keyboard (plus optional gamepad) to driver inputs, sampled on a fixed
// timer. Steering torque ramps while a key is held and springs back when
// released; engage/disengage/acknowledge/reset are one-shot events.

import type { DriverInputFrame } from "./types.js";

export interface InputEvents {
  engage?: "full_system" | "longi_adas";
  disengage?: boolean;
  reset_emergency?: boolean;
  pause?: boolean;
}

const TORQUE_MAX = 5.0; // N*m, cockpit hand-torque cap
const TORQUE_RAMP = 6.0; // N*m/s while held
const TORQUE_RETURN = 12.0; // N*m/s spring-back
const PEDAL_RAMP = 1.5; // 1/s while held

export class InputManager {
  private keys = new Set<string>();
  private oneshots: InputEvents = {};
  private torque = 0;
  private throttle = 0;
  private brake = 0;
  private inert = false; // device lost: emit zeros, surface a warning
  private pads: (() => Gamepad | null) | null = null;

  attach(target: {
    addEventListener(type: string, cb: (e: KeyboardEvent) => void): void;
  }): void {
    target.addEventListener("keydown", (e) => this.keyDown(e.key));
    target.addEventListener("keyup", (e) => this.keyUp(e.key));
  }

  useGamepad(query: () => Gamepad | null): void {
    this.pads = query;
  }

  keyDown(key: string): void {
    const k = key.toLowerCase();
    this.keys.add(k);
    if (k === "f") this.oneshots.engage = "full_system";
    if (k === "l") this.oneshots.engage = "longi_adas";
    if (k === "d") this.oneshots.disengage = true;
    if (k === "r") this.oneshots.reset_emergency = true;
    if (k === " ") this.oneshots.pause = true;
  }

  keyUp(key: string): void {
    this.keys.delete(key.toLowerCase());
  }

  deviceLost(): void {
    this.inert = true;
    this.keys.clear();
    this.torque = 0;
    this.throttle = 0;
    this.brake = 0;
  }

  deviceRestored(): void {
    this.inert = false;
  }

  get isInert(): boolean {
    return this.inert;
  }

  /** Advance held-key ramps by dt and emit one input frame plus events. */
  sample(dt: number): { frame: DriverInputFrame; events: InputEvents } {
    const events = this.oneshots;
    this.oneshots = {};
    if (this.inert) {
      return {
        frame: { type: "driver_input", steer_torque: 0, throttle: 0, brake: 0, acknowledge: false },
        events: {},
      };
    }

    let dir = 0;
    if (this.keys.has("arrowleft")) dir += 1; // +torque steers left
    if (this.keys.has("arrowright")) dir -= 1;
    const pad = this.pads ? this.pads() : null;
    if (pad && pad.axes.length > 0) dir = -pad.axes[0];

    if (dir !== 0) {
      this.torque += dir * TORQUE_RAMP * dt;
    } else if (this.torque > 0) {
      this.torque = Math.max(0, this.torque - TORQUE_RETURN * dt);
    } else {
      this.torque = Math.min(0, this.torque + TORQUE_RETURN * dt);
    }
    this.torque = Math.min(Math.max(this.torque, -TORQUE_MAX), TORQUE_MAX);

    const up = this.keys.has("arrowup");
    const down = this.keys.has("arrowdown");
    this.throttle = up ? Math.min(1, this.throttle + PEDAL_RAMP * dt) : 0;
    this.brake = down ? Math.min(1, this.brake + PEDAL_RAMP * dt) : 0;

    return {
      frame: {
        type: "driver_input",
        steer_torque: this.torque,
        throttle: this.throttle,
        brake: this.brake,
        acknowledge: this.keys.has("a"),
      },
      events,
    };
  }
}
