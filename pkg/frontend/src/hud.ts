// Pure derivation of the HUD state from the latest snapshot, kept separate
// from DOM code so the display mapping is testable.

import type { Notice } from "./net.js";
import type { Snapshot } from "./types.js";

export interface HudState {
  badge: { text: string; color: string };
  banner: { text: string; remaining: number; flash: boolean } | null;
  torque: { assist: number; driver: number; applied: number; override: boolean };
  pedalFeedback: number;
  speed: { kmh: number; targetKmh: number; advisedKmh: number | null; overAdvice: boolean };
  signalLost: boolean;
  paused: boolean;
  notices: Notice[];
}

const BADGE: Record<string, { text: string; color: string }> = {
  driver: { text: "DRIVER", color: "#888888" },
  longi_adas: { text: "LONGITUDINAL ASSIST", color: "#2277cc" },
  full_system: { text: "FULL DELEGATION", color: "#2a9d3a" },
  emergency: { text: "EMERGENCY STOP", color: "#cc2222" },
};

export function deriveHud(
  snapshot: Snapshot | null,
  stale: boolean,
  notices: Notice[],
  paused = false,
): HudState {
  if (snapshot === null) {
    return {
      badge: { text: "NO SIGNAL", color: "#444444" },
      banner: null,
      torque: { assist: 0, driver: 0, applied: 0, override: false },
      pedalFeedback: 0,
      speed: { kmh: 0, targetKmh: 0, advisedKmh: null, overAdvice: false },
      signalLost: true,
      paused,
      notices,
    };
  }
  const ego = snapshot.ego;
  let banner: HudState["banner"] = null;
  if (ego.tor !== null && ego.tor.state === "pending") {
    const remaining = Math.max(0, ego.tor.deadline - snapshot.t);
    banner = {
      text: `TAKE OVER (${ego.tor.reason.replace(/_/g, " ")})`,
      remaining,
      flash: true,
    };
  }
  const advised = ego.advised_limit;
  return {
    badge: BADGE[ego.mode],
    banner,
    torque: {
      assist: ego.shared.assist,
      driver: ego.shared.driver,
      applied: ego.shared.applied,
      override: ego.shared.override,
    },
    pedalFeedback: ego.shared.pedal_feedback,
    speed: {
      kmh: ego.v * 3.6,
      targetKmh: ego.target_speed * 3.6,
      advisedKmh: advised === null ? null : advised * 3.6,
      overAdvice: advised !== null && ego.v > advised + 0.1,
    },
    signalLost: stale,
    paused: snapshot.paused || paused,
    notices,
  };
}
