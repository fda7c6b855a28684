// Top-down canvas rendering: fighters, contact flashes, heading arrows,
// reward sparklines.

import type { FrameMessage } from "./protocol.js";
import type { ViewState } from "./state.js";

const AGENT_COLORS = ["#3b82f6", "#ef4444"];
const LIMB_LINKS: [number, number][] = [
  [0, 1], [0, 2], [2, 3], [3, 4], [0, 5], [5, 6], [6, 7],
];

export interface Scale {
  px: (x: number) => number;
  py: (y: number) => number;
  s: (len: number) => number;
}

/** World-to-canvas mapping that preserves aspect under resize. */
export function makeScale(width: number, height: number, halfextent: number): Scale {
  const margin = 12;
  const k = Math.min(width, height) / 2 - margin;
  const cx = width / 2;
  const cy = height / 2;
  return {
    px: (x) => cx + (x / halfextent) * k,
    py: (y) => cy - (y / halfextent) * k,
    s: (len) => (len / halfextent) * k,
  };
}

export function drawScene(ctx: CanvasRenderingContext2D, view: ViewState,
                          frame: FrameMessage, width: number, height: number): void {
  const geo = view.geometry;
  const sc = makeScale(width, height, geo.halfextent);
  ctx.clearRect(0, 0, width, height);

  // Arena bounds.
  ctx.strokeStyle = "#475569";
  ctx.lineWidth = 2;
  ctx.strokeRect(sc.px(-geo.halfextent), sc.py(geo.halfextent),
                 sc.s(2 * geo.halfextent), sc.s(2 * geo.halfextent));

  for (let i = 0; i < 2; i++) {
    const agent = frame.agents[i];
    ctx.strokeStyle = AGENT_COLORS[i];
    ctx.lineWidth = 3;
    for (const [a, b] of LIMB_LINKS) {
      ctx.beginPath();
      ctx.moveTo(sc.px(agent.parts[a][0]), sc.py(agent.parts[a][1]));
      ctx.lineTo(sc.px(agent.parts[b][0]), sc.py(agent.parts[b][1]));
      ctx.stroke();
    }
    for (let p = 0; p < 8; p++) {
      const [x, y, ang] = agent.parts[p];
      ctx.beginPath();
      ctx.fillStyle = p === 0 ? AGENT_COLORS[i] + "55" : AGENT_COLORS[i];
      ctx.arc(sc.px(x), sc.py(y), Math.max(2, sc.s(geo.part_radii[p])), 0, 2 * Math.PI);
      ctx.fill();
      if (p === 0) {
        // facing tick on the torso
        ctx.beginPath();
        ctx.strokeStyle = "#f8fafc";
        ctx.lineWidth = 2;
        ctx.moveTo(sc.px(x), sc.py(y));
        ctx.lineTo(sc.px(x + Math.cos(ang) * geo.part_radii[0]),
                   sc.py(y + Math.sin(ang) * geo.part_radii[0]));
        ctx.stroke();
      }
    }
    const heading = view.headingOf(i as 0 | 1);
    if (heading) {
      const [rx, ry] = agent.parts[0];
      drawArrow(ctx, sc, rx, ry, heading, AGENT_COLORS[i]);
    }
  }

  // Contact flashes scaled by force.
  for (const c of frame.contacts) {
    const r = Math.min(18, 4 + c.force / 25);
    ctx.beginPath();
    ctx.fillStyle = "#facc1588";
    ctx.arc(sc.px(c.point[0]), sc.py(c.point[1]), r, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawArrow(ctx: CanvasRenderingContext2D, sc: Scale, x: number, y: number,
                   dir: [number, number], color: string): void {
  const len = 0.9;
  const tipX = x + dir[0] * len;
  const tipY = y + dir[1] * len;
  ctx.strokeStyle = color;
  ctx.lineWidth = 2.5;
  ctx.beginPath();
  ctx.moveTo(sc.px(x), sc.py(y));
  ctx.lineTo(sc.px(tipX), sc.py(tipY));
  ctx.stroke();
  const ang = Math.atan2(-dir[1], dir[0]);
  ctx.beginPath();
  ctx.moveTo(sc.px(tipX), sc.py(tipY));
  ctx.lineTo(sc.px(tipX) + 10 * Math.cos(ang + 2.6), sc.py(tipY) + 10 * Math.sin(ang + 2.6));
  ctx.moveTo(sc.px(tipX), sc.py(tipY));
  ctx.lineTo(sc.px(tipX) + 10 * Math.cos(ang - 2.6), sc.py(tipY) + 10 * Math.sin(ang - 2.6));
  ctx.stroke();
}

/** Mini polyline of recent reward components for one agent. */
export function drawSparkline(ctx: CanvasRenderingContext2D, view: ViewState,
                              agent: 0 | 1, x0: number, y0: number,
                              width: number, height: number): void {
  const hist = view.rewardHistory[agent];
  ctx.strokeStyle = "#64748b";
  ctx.strokeRect(x0, y0, width, height);
  if (hist.length < 2) return;
  const keys: ("motion" | "interaction" | "control")[] = ["motion", "interaction", "control"];
  const colors = { motion: "#22d3ee", interaction: "#a78bfa", control: "#facc15" };
  for (const key of keys) {
    const values = hist.map((h) => h[key]).filter((v): v is number => v !== undefined);
    if (values.length < 2) continue;
    const max = Math.max(1e-6, ...values);
    ctx.strokeStyle = colors[key];
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    values.forEach((v, i) => {
      const px = x0 + (i / (values.length - 1)) * width;
      const py = y0 + height - (v / max) * height;
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }
}
