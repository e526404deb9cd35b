import { describe, expect, it } from "vitest";

import { InputManager } from "../src/input.js";

function run(im: InputManager, seconds: number, dt = 0.02) {
  let last = im.sample(dt);
  for (let t = dt; t < seconds; t += dt) last = im.sample(dt);
  return last;
}

describe("input capture", () => {
  it("emits an all-zero frame with no keys held", () => {
    const im = new InputManager();
    const { frame } = im.sample(0.02);
    expect(frame).toEqual({
      type: "driver_input", steer_torque: 0, throttle: 0, brake: 0, acknowledge: false,
    });
  });

  it("ramps steering torque while held and caps at 5", () => {
    const im = new InputManager();
    im.keyDown("ArrowLeft");
    const mid = run(im, 0.3);
    expect(mid.frame.steer_torque).toBeGreaterThan(0.5);
    expect(mid.frame.steer_torque).toBeLessThan(5.0);
    const capped = run(im, 1.5);
    expect(capped.frame.steer_torque).toBeCloseTo(5.0, 6);
    im.keyUp("ArrowLeft");
    const released = run(im, 1.0);
    expect(released.frame.steer_torque).toBe(0);
  });

  it("right arrow gives negative torque", () => {
    const im = new InputManager();
    im.keyDown("ArrowRight");
    expect(run(im, 1.5).frame.steer_torque).toBeCloseTo(-5.0, 6);
  });

  it("acknowledge is reported while the key is down", () => {
    const im = new InputManager();
    im.keyDown("a");
    expect(im.sample(0.02).frame.acknowledge).toBe(true);
    im.keyUp("a");
    expect(im.sample(0.02).frame.acknowledge).toBe(false);
  });

  it("engage/disengage/reset are one-shot events", () => {
    const im = new InputManager();
    im.keyDown("f");
    expect(im.sample(0.02).events.engage).toBe("full_system");
    expect(im.sample(0.02).events.engage).toBeUndefined();
    im.keyDown("l");
    expect(im.sample(0.02).events.engage).toBe("longi_adas");
    im.keyDown("d");
    expect(im.sample(0.02).events.disengage).toBe(true);
    im.keyDown("r");
    expect(im.sample(0.02).events.reset_emergency).toBe(true);
  });

  it("a lost device zeroes everything until restored", () => {
    const im = new InputManager();
    im.keyDown("ArrowLeft");
    run(im, 1.0);
    im.deviceLost();
    const { frame } = im.sample(0.02);
    expect(frame.steer_torque).toBe(0);
    expect(im.isInert).toBe(true);
    im.deviceRestored();
    expect(im.isInert).toBe(false);
  });
});
