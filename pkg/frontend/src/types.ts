// Wire protocol types, mirroring docs/telemetry-schema.json. All units SI.

export type Mode = "driver" | "longi_adas" | "full_system" | "emergency";

export interface SegmentGeom {
  id: number;
  length: number;
  curvature: number;
  lane_count: number;
  lane_width: number;
  speed_limit: number;
  secured: boolean;
  has_emergency_lane: boolean;
  start: [number, number, number]; // x, y, heading of the reference start
}

export interface MapFrame {
  type: "map";
  closed: boolean;
  total_length: number;
  segments: SegmentGeom[];
}

export interface TorInfo {
  issued_at: number;
  deadline: number;
  reason: string;
  state: "pending" | "acknowledged" | "expired";
}

export interface SharedInfo {
  assist: number;
  driver: number;
  applied: number;
  override: boolean;
  pedal_feedback: number;
}

export interface TrackInfo {
  id: number;
  s: number;
  d: number;
  v: number;
  confirmed: boolean;
}

export interface EgoInfo {
  s: number;
  d: number;
  v: number;
  a: number;
  lane: number;
  steer: number;
  mode: Mode;
  tor: TorInfo | null;
  shared: SharedInfo;
  target_speed: number;
  advised_limit: number | null;
  trajectory: [number, number][] | null; // (s, d) samples of the active plan
  mrs: [number, number][] | null;        // safe-stop fallback
  tracks: TrackInfo[];
}

export interface VehicleInfo {
  id: number;
  kind: "automated" | "conventional";
  s: number;
  d: number;
  v: number;
  lane: number;
  mode: Mode | null;
}

export interface Snapshot {
  type: "snapshot";
  schema_version: number;
  t: number;
  paused: boolean;
  ego: EgoInfo;
  vehicles: VehicleInfo[];
  statics: { s: number; d: number; lane: number }[];
  recommendations: {
    segment_id: number;
    advised_limit: number;
    issued_at: number;
    ttl: number;
  }[];
  metrics: { collisions: number; mean_speed: number; fuel_g: number };
}

export interface RefusalFrame {
  type: "refusal";
  reason: string;
  requested?: string | null;
  t?: number;
}

export interface ErrorFrame {
  type: "error";
  message: string;
}

export interface WelcomeFrame {
  type: "welcome";
  role: "driver" | "viewer";
}

export type ServerFrame =
  | MapFrame
  | Snapshot
  | RefusalFrame
  | ErrorFrame
  | WelcomeFrame;

export interface DriverInputFrame {
  type: "driver_input";
  steer_torque: number;
  throttle: number;
  brake: number;
  acknowledge: boolean;
}
