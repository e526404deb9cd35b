import { describe, expect, it } from "vitest";

import { RoadGeometry } from "../src/geometry.js";
import type { MapFrame, SegmentGeom } from "../src/types.js";

function seg(partial: Partial<SegmentGeom>): SegmentGeom {
  return {
    id: 0,
    length: 100,
    curvature: 0,
    lane_count: 2,
    lane_width: 3.5,
    speed_limit: 13.89,
    secured: true,
    has_emergency_lane: false,
    start: [0, 0, 0],
    ...partial,
  };
}

function road(segments: SegmentGeom[], closed = false): RoadGeometry {
  const total = segments.reduce((a, s) => a + s.length, 0);
  const frame: MapFrame = { type: "map", closed, total_length: total, segments };
  return new RoadGeometry(frame);
}

describe("road geometry", () => {
  it("maps straight segments", () => {
    const r = road([seg({})]);
    expect(r.toXY(10, 0)).toEqual([10, 0]);
    const [x, y] = r.toXY(10, 1.5);
    expect(x).toBeCloseTo(10, 9);
    expect(y).toBeCloseTo(1.5, 9); // positive d is left of travel (+x)
  });

  it("maps arcs like the server does", () => {
    // curvature 0.01 left turn from the origin: center at (0, 100);
    // 30 m of arc is 0.3 rad around the center
    const r = road([seg({ length: 200, curvature: 0.01 })]);
    const [x, y] = r.toXY(30, 0);
    expect(x).toBeCloseTo(100 * Math.sin(0.3), 9);
    expect(y).toBeCloseTo(100 - 100 * Math.cos(0.3), 9);
    expect(r.heading(30)).toBeCloseTo(0.3, 9);
  });

  it("chains segments with carried poses", () => {
    const arc = seg({ id: 1, length: 100, curvature: 0.01,
                      start: [100, 0, 0] });
    const r = road([seg({}), arc]);
    const [x, y] = r.toXY(100, 0);
    expect(x).toBeCloseTo(100, 9);
    expect(y).toBeCloseTo(0, 9);
    expect(r.heading(150)).toBeCloseTo(0.5, 9);
  });

  it("wraps on ring roads", () => {
    const r = road([seg({ length: 100 })], true);
    expect(r.wrapS(105)).toBeCloseTo(5, 9);
    expect(r.wrapS(-5)).toBeCloseTo(95, 9);
  });

  it("reports per-position segment attributes", () => {
    const r = road([
      seg({}),
      seg({ id: 1, length: 50, secured: false, start: [100, 0, 0] }),
    ]);
    expect(r.securedAt(50)).toBe(true);
    expect(r.securedAt(120)).toBe(false);
  });
});
