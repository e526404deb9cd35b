// WebSocket session: role handling, latest snapshot, notices for refusals
// and errors. The UI never mutates simulation state except through the
// command frames sent here.

import { RoadGeometry } from "./geometry.js";
import type { DriverInputFrame, ServerFrame, Snapshot } from "./types.js";

export interface Notice {
  kind: "refusal" | "error" | "info";
  text: string;
  at: number; // wall clock ms
}

type WsLike = {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
};

export class CockpitClient {
  state: "connecting" | "open" | "closed" = "connecting";
  role: "driver" | "viewer" | null = null;
  road: RoadGeometry | null = null;
  snapshot: Snapshot | null = null;
  lastSnapshotWall = 0;
  notices: Notice[] = [];
  onframe: ((frame: ServerFrame) => void) | null = null;

  private ws: WsLike;

  constructor(
    url: string,
    private wantDriver: boolean,
    wsFactory: (url: string) => WsLike = (u) => new WebSocket(u) as unknown as WsLike,
    private now: () => number = () => Date.now(),
  ) {
    this.ws = wsFactory(url);
    this.ws.onopen = () => {
      this.state = "open";
      this.send({ type: "hello", role: this.wantDriver ? "driver" : "viewer" });
    };
    this.ws.onclose = () => {
      this.state = "closed";
    };
    this.ws.onerror = () => {
      this.state = "closed";
      this.notices.push({ kind: "error", text: "connection failed", at: this.now() });
    };
    this.ws.onmessage = (ev) => this.handle(String(ev.data));
  }

  private handle(raw: string): void {
    let frame: ServerFrame;
    try {
      frame = JSON.parse(raw) as ServerFrame;
    } catch {
      this.notices.push({ kind: "error", text: "unreadable frame from server", at: this.now() });
      return;
    }
    switch (frame.type) {
      case "map":
        this.road = new RoadGeometry(frame);
        break;
      case "welcome":
        this.role = frame.role;
        break;
      case "snapshot":
        this.snapshot = frame;
        this.lastSnapshotWall = this.now();
        break;
      case "refusal":
        this.role = this.role ?? "viewer";
        this.notices.push({
          kind: "refusal",
          text: frame.requested
            ? `${frame.requested} refused: ${frame.reason}`
            : `refused: ${frame.reason}`,
          at: this.now(),
        });
        break;
      case "error":
        this.notices.push({ kind: "error", text: frame.message, at: this.now() });
        break;
    }
    if (this.onframe) this.onframe(frame);
  }

  /** Snapshot older than 0.5 s means the signal is gone. */
  isStale(): boolean {
    return (
      this.snapshot !== null && this.now() - this.lastSnapshotWall > 500
    );
  }

  dismissNotice(index: number): void {
    this.notices.splice(index, 1);
  }

  send(obj: unknown): void {
    if (this.state === "open") this.ws.send(JSON.stringify(obj));
  }

  sendInput(frame: DriverInputFrame): void {
    if (this.role === "driver") this.send(frame);
  }

  engage(mode: "full_system" | "longi_adas"): void {
    this.send({ type: "engage", mode });
  }

  disengage(): void {
    this.send({ type: "disengage" });
  }

  resetEmergency(): void {
    this.send({ type: "reset_emergency" });
  }

  pause(paused: boolean): void {
    this.send({ type: "pause", paused });
  }

  close(): void {
    this.ws.close();
  }
}
