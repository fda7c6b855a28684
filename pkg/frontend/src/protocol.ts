// Wire protocol (version 1) — message shapes and validation.
// Everything the UI displays comes from validated server frames; anything
// that fails validation is dropped before it can reach the view state.

export const PROTOCOL_VERSION = 1;

export interface AgentFrame {
  parts: [number, number, number][]; // 8 x [x, y, angle]
  root_vel: [number, number];
  heading: [number, number] | null;
  rewards: Record<string, number> | null;
}

export interface ContactFrame {
  src: [number, number];
  dst: [number, number];
  force: number;
  point: [number, number];
  normal: [number, number];
}

export interface FrameMessage {
  type: "frame";
  version: number;
  step: number;
  checkpoint: string;
  paused: boolean;
  agents: AgentFrame[];
  contacts: ContactFrame[];
}

export interface HelloMessage {
  type: "hello";
  version: number;
  role: "controller" | "viewer";
  checkpoints: string[];
  active: string;
  heading_capable: boolean;
  geometry: { halfextent: number; part_radii: number[]; control_hz: number };
}

export interface AckMessage {
  type: "ack";
  version: number;
  command: string;
  checkpoint: string;
}

export interface ErrorMessage {
  type: "error";
  version: number;
  message: string;
}

export type ServerMessage = FrameMessage | HelloMessage | AckMessage | ErrorMessage;

export type Command =
  | { type: "set_heading"; agent: 0 | 1 | "both"; dx: number; dy: number }
  | { type: "pause" }
  | { type: "resume" }
  | { type: "reset"; seed: number }
  | { type: "load_checkpoint"; id: string }
  | { type: "set_speed"; multiplier: number }
  | { type: "release_control" };

function isPair(v: unknown): v is [number, number] {
  return Array.isArray(v) && v.length === 2 && v.every((x) => typeof x === "number" && isFinite(x));
}

function isTriple(v: unknown): v is [number, number, number] {
  return Array.isArray(v) && v.length === 3 && v.every((x) => typeof x === "number" && isFinite(x));
}

function validAgent(a: unknown): a is AgentFrame {
  if (typeof a !== "object" || a === null) return false;
  const o = a as Record<string, unknown>;
  if (!Array.isArray(o.parts) || o.parts.length !== 8 || !o.parts.every(isTriple)) return false;
  if (!isPair(o.root_vel)) return false;
  if (o.heading !== null && !isPair(o.heading)) return false;
  if (o.rewards !== null && (typeof o.rewards !== "object" || Array.isArray(o.rewards))) return false;
  return true;
}

/** Parse + validate one server message; null when it is not usable. */
export function parseServerMessage(raw: string): ServerMessage | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const m = obj as Record<string, unknown>;
  if (m.version !== PROTOCOL_VERSION) return null;
  switch (m.type) {
    case "frame": {
      if (typeof m.step !== "number" || typeof m.checkpoint !== "string") return null;
      if (!Array.isArray(m.agents) || m.agents.length !== 2 || !m.agents.every(validAgent)) return null;
      if (!Array.isArray(m.contacts)) return null;
      return m as unknown as FrameMessage;
    }
    case "hello": {
      if (!Array.isArray(m.checkpoints) || typeof m.active !== "string") return null;
      const g = m.geometry as Record<string, unknown> | undefined;
      if (!g || typeof g.halfextent !== "number" || !Array.isArray(g.part_radii)) return null;
      return m as unknown as HelloMessage;
    }
    case "ack":
      return typeof m.command === "string" ? (m as unknown as AckMessage) : null;
    case "error":
      return typeof m.message === "string" ? (m as unknown as ErrorMessage) : null;
    default:
      return null;
  }
}

/** Serialize a command; throws on anything that would be malformed on the wire. */
export function encodeCommand(cmd: Command): string {
  if (cmd.type === "set_heading") {
    const n = Math.hypot(cmd.dx, cmd.dy);
    if (!isFinite(n) || n < 1e-9) throw new Error("heading must be a nonzero vector");
    if (cmd.agent !== "both" && cmd.agent !== 0 && cmd.agent !== 1) throw new Error("bad agent");
  }
  if (cmd.type === "set_speed" && !(cmd.multiplier >= 0.1 && cmd.multiplier <= 16)) {
    throw new Error("speed multiplier out of range");
  }
  if (cmd.type === "load_checkpoint" && cmd.id.length === 0) {
    throw new Error("empty checkpoint id");
  }
  return JSON.stringify({ version: PROTOCOL_VERSION, ...cmd });
}
