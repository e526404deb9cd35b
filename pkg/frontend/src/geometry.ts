// Road geometry on the client: segment chains of constant curvature,
// (s, d) -> global xy for drawing. Mirrors the server's reference-line math.

import type { MapFrame, SegmentGeom } from "./types.js";

export class RoadGeometry {
  readonly closed: boolean;
  readonly totalLength: number;
  readonly segments: SegmentGeom[];
  private starts: number[];

  constructor(frame: MapFrame) {
    this.closed = frame.closed;
    this.totalLength = frame.total_length;
    this.segments = frame.segments;
    this.starts = [];
    let acc = 0;
    for (const seg of this.segments) {
      this.starts.push(acc);
      acc += seg.length;
    }
  }

  wrapS(s: number): number {
    if (!this.closed) return Math.min(Math.max(s, 0), this.totalLength);
    return ((s % this.totalLength) + this.totalLength) % this.totalLength;
  }

  private segmentAt(s: number): [SegmentGeom, number] {
    s = this.wrapS(s);
    let idx = this.segments.length - 1;
    for (let i = 0; i < this.segments.length; i++) {
      if (s < this.starts[i] + this.segments[i].length) {
        idx = i;
        break;
      }
    }
    return [this.segments[idx], s - this.starts[idx]];
  }

  refPose(s: number): [number, number, number] {
    const [seg, u] = this.segmentAt(s);
    const [x0, y0, psi0] = seg.start;
    if (Math.abs(seg.curvature) < 1e-12) {
      return [x0 + u * Math.cos(psi0), y0 + u * Math.sin(psi0), psi0];
    }
    const k = seg.curvature;
    const psi = psi0 + k * u;
    return [
      x0 + (Math.sin(psi) - Math.sin(psi0)) / k,
      y0 - (Math.cos(psi) - Math.cos(psi0)) / k,
      psi,
    ];
  }

  toXY(s: number, d: number): [number, number] {
    const [x, y, psi] = this.refPose(s);
    return [x - Math.sin(psi) * d, y + Math.cos(psi) * d];
  }

  heading(s: number): number {
    return this.refPose(s)[2];
  }

  laneCountAt(s: number): number {
    return this.segmentAt(s)[0].lane_count;
  }

  laneWidthAt(s: number): number {
    return this.segmentAt(s)[0].lane_width;
  }

  securedAt(s: number): boolean {
    return this.segmentAt(s)[0].secured;
  }

  /** Polyline of constant lateral offset, for drawing road edges and lanes. */
  polyline(d: number, step = 3): [number, number][] {
    const pts: [number, number][] = [];
    for (let s = 0; s <= this.totalLength + 1e-9; s += step) {
      pts.push(this.toXY(Math.min(s, this.totalLength), d));
    }
    if (this.closed) pts.push(this.toXY(0, d));
    return pts;
  }
}
