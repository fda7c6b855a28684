// View state: a two-frame interpolation buffer plus everything the HUD shows.

import type { FrameMessage, HelloMessage } from "./protocol.js";

export type Connection = "connecting" | "live" | "stale" | "closed";

export interface RewardPoint {
  step: number;
  motion?: number;
  interaction?: number;
  control?: number;
}

export const SPARKLINE_CAPACITY = 240; // ~8 s of history at 30 Hz

export class ViewState {
  previous: FrameMessage | null = null;
  latest: FrameMessage | null = null;
  latestArrivedAt = 0;
  connection: Connection = "connecting";
  role: "controller" | "viewer" = "viewer";
  checkpoints: string[] = [];
  activeCheckpoint = "";
  headingCapable = false;
  geometry = { halfextent: 4, part_radii: [0.25, 0.12, 0.08, 0.07, 0.1, 0.08, 0.07, 0.1], control_hz: 30 };
  selectedAgent: 0 | 1 | "both" = "both";
  dragVector: [number, number] | null = null; // local preview while dragging
  rewardHistory: RewardPoint[][] = [[], []];
  lastError = "";

  applyHello(msg: HelloMessage): void {
    this.role = msg.role;
    this.checkpoints = msg.checkpoints;
    this.activeCheckpoint = msg.active;
    this.headingCapable = msg.heading_capable;
    this.geometry = msg.geometry;
  }

  /** Append a validated frame; the previous latest becomes the lerp base. */
  applyFrame(msg: FrameMessage, now: number): void {
    this.previous = this.latest;
    this.latest = msg;
    this.latestArrivedAt = now;
    this.connection = "live";
    this.activeCheckpoint = msg.checkpoint;
    for (let i = 0; i < 2; i++) {
      const r = msg.agents[i].rewards;
      if (!r) continue;
      const hist = this.rewardHistory[i];
      hist.push({ step: msg.step, ...r });
      if (hist.length > SPARKLINE_CAPACITY) hist.shift();
    }
  }

  /** Authoritative heading arrow for an agent: server frame, else drag preview. */
  headingOf(agent: 0 | 1): [number, number] | null {
    if (this.dragVector) return this.dragVector;
    return this.latest ? this.latest.agents[agent].heading : null;
  }

  markStale(now: number, timeoutMs = 2000): void {
    if (this.connection === "live" && now - this.latestArrivedAt > timeoutMs) {
      this.connection = "stale";
    }
  }
}
