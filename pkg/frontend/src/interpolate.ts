// Pose interpolation between the two most recent frames.

import type { AgentFrame, FrameMessage } from "./protocol.js";

export function lerp(a: number, b: number, t: number): number {
  return a + (b - a) * t;
}

/** Shortest-arc angle interpolation (radians). */
export function lerpAngle(a: number, b: number, t: number): number {
  let d = (b - a) % (2 * Math.PI);
  if (d > Math.PI) d -= 2 * Math.PI;
  if (d < -Math.PI) d += 2 * Math.PI;
  return a + d * t;
}

export function lerpAgent(a: AgentFrame, b: AgentFrame, t: number): AgentFrame {
  return {
    parts: a.parts.map((p, i) => [
      lerp(p[0], b.parts[i][0], t),
      lerp(p[1], b.parts[i][1], t),
      lerpAngle(p[2], b.parts[i][2], t),
    ]) as [number, number, number][],
    root_vel: [lerp(a.root_vel[0], b.root_vel[0], t), lerp(a.root_vel[1], b.root_vel[1], t)],
    heading: b.heading, // steering state snaps, it is not physical motion
    rewards: b.rewards,
  };
}

/**
 * Scene at a render instant: blend previous -> latest by the time elapsed
 * since the latest frame arrived, clamped to [0, 1].  Contacts come from the
 * latest frame only (they are instantaneous events).
 */
export function interpolated(
  previous: FrameMessage | null,
  latest: FrameMessage | null,
  elapsedMs: number,
  frameIntervalMs: number,
): FrameMessage | null {
  if (!latest) return null;
  if (!previous || frameIntervalMs <= 0) return latest;
  const t = Math.min(1, Math.max(0, elapsedMs / frameIntervalMs));
  return {
    ...latest,
    agents: [lerpAgent(previous.agents[0], latest.agents[0], t),
             lerpAgent(previous.agents[1], latest.agents[1], t)],
  };
}
