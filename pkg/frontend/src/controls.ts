// Steering input: heading drag with throttled sends, checkpoint switching.

import { Command, encodeCommand } from "./protocol.js";

export const DRAG_SEND_HZ = 10;

export interface CommandSink {
  send(cmd: Command): void;
}

/**
 * Turns pointer positions into set_heading commands.
 *
 * The drag vector runs from the drag origin to the current pointer, in
 * canvas pixels (y down); world y points up, so the y component flips.
 * Sends are throttled to DRAG_SEND_HZ while dragging, with a final send on
 * release; zero-length drags are ignored.
 */
export class HeadingDrag {
  private origin: [number, number] | null = null;
  private lastSentAt = -Infinity;
  private pending: [number, number] | null = null;
  private unsent = false;

  constructor(
    private sink: CommandSink,
    private agent: () => 0 | 1 | "both",
    private now: () => number = () => performance.now(),
  ) {}

  get active(): boolean {
    return this.origin !== null;
  }

  /** Current normalized drag vector (world frame), for local arrow preview. */
  get preview(): [number, number] | null {
    return this.pending;
  }

  down(x: number, y: number): void {
    this.origin = [x, y];
    this.pending = null;
  }

  move(x: number, y: number): void {
    if (!this.origin) return;
    const dx = x - this.origin[0];
    const dy = -(y - this.origin[1]);
    const n = Math.hypot(dx, dy);
    if (n < 8) return; // dead zone in pixels: ignore micro-drags
    this.pending = [dx / n, dy / n];
    this.unsent = true;
    const t = this.now();
    if (t - this.lastSentAt >= 1000 / DRAG_SEND_HZ) {
      this.flush();
    }
  }

  up(): void {
    if (this.unsent) this.flush();
    this.origin = null;
    this.pending = null;
    this.unsent = false;
  }

  private flush(): void {
    if (!this.pending) return;
    this.sink.send({
      type: "set_heading",
      agent: this.agent(),
      dx: this.pending[0],
      dy: this.pending[1],
    });
    this.lastSentAt = this.now();
    this.unsent = false;
  }
}

/** Send-side gate: every outgoing command is serialized (and so validated). */
export function makeSocketSink(socket: { send(data: string): void }): CommandSink {
  return {
    send(cmd: Command) {
      socket.send(encodeCommand(cmd));
    },
  };
}

export function switchCheckpoint(sink: CommandSink, id: string): void {
  sink.send({ type: "load_checkpoint", id });
}
