import { describe, expect, it } from "vitest";

import { interpolated, lerpAngle } from "../src/interpolate.js";
import type { FrameMessage } from "../src/protocol.js";

function mkFrame(step: number, x: number, angle = 0): FrameMessage {
  const agent = {
    parts: Array.from({ length: 8 }, () => [x, 0, angle] as [number, number, number]),
    root_vel: [0, 0] as [number, number],
    heading: null,
    rewards: null,
  };
  return { type: "frame", version: 1, step, checkpoint: "c", paused: false,
           agents: [agent, { ...agent }], contacts: [] };
}

describe("lerpAngle", () => {
  it("takes the short way across the wrap", () => {
    const a = lerpAngle(Math.PI - 0.1, -Math.PI + 0.1, 0.5);
    expect(Math.abs(Math.abs(a) - Math.PI)).toBeLessThan(1e-9);
  });

  it("is exact at the endpoints", () => {
    expect(lerpAngle(0.3, 1.1, 0)).toBeCloseTo(0.3, 12);
    expect(lerpAngle(0.3, 1.1, 1)).toBeCloseTo(1.1, 12);
  });
});

describe("interpolated", () => {
  it("blends positions midway between the two frames", () => {
    const scene = interpolated(mkFrame(1, 0), mkFrame(2, 1), 16.5, 33);
    expect(scene?.agents[0].parts[0][0]).toBeCloseTo(0.5, 9);
  });

  it("clamps beyond the frame interval", () => {
    const scene = interpolated(mkFrame(1, 0), mkFrame(2, 1), 500, 33);
    expect(scene?.agents[0].parts[0][0]).toBe(1);
  });

  it("returns the latest frame when no previous exists", () => {
    const latest = mkFrame(5, 2);
    expect(interpolated(null, latest, 0, 33)).toBe(latest);
  });

  it("renders nothing before the first frame", () => {
    expect(interpolated(null, null, 0, 33)).toBeNull();
  });
});
