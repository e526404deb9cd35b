// Top-down canvas scene: road with lanes, secured-zone tint, vehicles,
// the active trajectory and the safe-stop fallback, and the sensing arc.

import { RoadGeometry } from "./geometry.js";
import type { Snapshot } from "./types.js";

const CAMERA_SCALE = 6; // px per meter
const CAMERA_AHEAD = 25; // m, ego sits below center

export class SceneRenderer {
  constructor(private canvas: HTMLCanvasElement) {}

  draw(road: RoadGeometry | null, snapshot: Snapshot | null): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const w = this.canvas.width;
    const h = this.canvas.height;
    ctx.fillStyle = "#1c2418";
    ctx.fillRect(0, 0, w, h);
    if (!road || !snapshot) return;

    const ego = snapshot.ego;
    const [ex, ey] = road.toXY(ego.s, ego.d);
    const psi = road.heading(ego.s);

    ctx.save();
    ctx.translate(w / 2, h / 2 + CAMERA_AHEAD * CAMERA_SCALE * 0.5);
    ctx.scale(CAMERA_SCALE, -CAMERA_SCALE); // y up
    ctx.rotate(psi - Math.PI / 2); // heading up
    ctx.translate(-ex, -ey);

    this.drawRoad(ctx, road);
    this.drawTrajectory(ctx, road, ego.mrs, "#cc4444", [1.2, 1.2]);
    this.drawTrajectory(ctx, road, ego.trajectory, "#44cc88", []);
    this.drawSensingArc(ctx, ex, ey, psi);
    this.drawVehicles(ctx, road, snapshot);
    ctx.restore();
  }

  private drawRoad(ctx: CanvasRenderingContext2D, road: RoadGeometry): void {
    for (let i = 0; i < road.segments.length; i++) {
      const seg = road.segments[i];
      const s0 = road.segments.slice(0, i).reduce((a, s) => a + s.length, 0);
      const lw = seg.lane_width;
      const dLow = seg.has_emergency_lane ? -1.5 * lw : -0.5 * lw;
      const dHigh = (seg.lane_count - 0.5) * lw;
      // asphalt
      ctx.strokeStyle = seg.secured ? "#3d4a55" : "#36393c";
      ctx.lineWidth = dHigh - dLow;
      this.strokePath(ctx, this.segmentLine(road, s0, seg.length, (dLow + dHigh) / 2));
      if (seg.has_emergency_lane) {
        ctx.strokeStyle = "#49424a";
        ctx.lineWidth = lw * 0.96;
        this.strokePath(ctx, this.segmentLine(road, s0, seg.length, -lw));
      }
      if (seg.secured) {
        ctx.strokeStyle = "#5fd38d";
        ctx.lineWidth = 0.3;
        this.strokePath(ctx, this.segmentLine(road, s0, seg.length, dHigh + 0.5));
      }
      // edges and separators
      ctx.strokeStyle = "#dddddd";
      ctx.lineWidth = 0.12;
      this.strokePath(ctx, this.segmentLine(road, s0, seg.length, dHigh));
      this.strokePath(ctx, this.segmentLine(road, s0, seg.length, -0.5 * lw));
      ctx.setLineDash([2, 2]);
      for (let lane = 0; lane < seg.lane_count - 1; lane++) {
        this.strokePath(ctx, this.segmentLine(road, s0, seg.length, (lane + 0.5) * lw));
      }
      ctx.setLineDash([]);
    }
  }

  private segmentLine(
    road: RoadGeometry,
    s0: number,
    length: number,
    d: number,
  ): [number, number][] {
    const pts: [number, number][] = [];
    for (let u = 0; u <= length + 1e-9; u += 4) {
      pts.push(road.toXY(s0 + Math.min(u, length), d));
    }
    return pts;
  }

  private strokePath(ctx: CanvasRenderingContext2D, pts: [number, number][]): void {
    if (pts.length < 2) return;
    ctx.beginPath();
    ctx.moveTo(pts[0][0], pts[0][1]);
    for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y);
    ctx.stroke();
  }

  private drawTrajectory(
    ctx: CanvasRenderingContext2D,
    road: RoadGeometry,
    poly: [number, number][] | null,
    color: string,
    dash: number[],
  ): void {
    if (!poly || poly.length < 2) return;
    ctx.strokeStyle = color;
    ctx.lineWidth = 0.4;
    ctx.setLineDash(dash);
    this.strokePath(ctx, poly.map(([s, d]) => road.toXY(s, d)));
    ctx.setLineDash([]);
  }

  private drawSensingArc(
    ctx: CanvasRenderingContext2D,
    x: number,
    y: number,
    heading: number,
  ): void {
    ctx.fillStyle = "rgba(120, 180, 255, 0.08)";
    ctx.beginPath();
    ctx.moveTo(x, y);
    ctx.arc(x, y, 40, heading - (22.5 * Math.PI) / 180, heading + (22.5 * Math.PI) / 180);
    ctx.closePath();
    ctx.fill();
  }

  private drawVehicles(
    ctx: CanvasRenderingContext2D,
    road: RoadGeometry,
    snapshot: Snapshot,
  ): void {
    const box = (s: number, d: number, len: number, wid: number, color: string) => {
      const [x, y] = road.toXY(s, d);
      const psi = road.heading(s);
      ctx.save();
      ctx.translate(x, y);
      ctx.rotate(psi);
      ctx.fillStyle = color;
      ctx.fillRect(-len / 2, -wid / 2, len, wid);
      ctx.restore();
    };
    for (const o of snapshot.statics) box(o.s, o.d, 1.2, 1.8, "#e0b040");
    for (const v of snapshot.vehicles) {
      if (v.id === 0) continue;
      box(v.s, v.d, 4.5, 1.8, v.kind === "automated" ? "#5f9edd" : "#b9c0c7");
    }
    for (const trk of snapshot.ego.tracks) {
      const [x, y] = road.toXY(trk.s, trk.d);
      ctx.strokeStyle = trk.confirmed ? "#ff9955" : "#776655";
      ctx.lineWidth = 0.25;
      ctx.strokeRect(x - 2.4, y - 1.2, 4.8, 2.4);
    }
    box(snapshot.ego.s, snapshot.ego.d, 4.5, 1.8, "#67e06f");
  }
}
