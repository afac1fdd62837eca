/**
 * Joint drag controller: turns a stream of pointer positions into
 * throttled move_joint requests with monotonically increasing sequence
 * ids, and reconciles preview responses so stale ones are dropped.
 */

import type { BridgeClient, BridgeResponse } from "./protocol.js";
import type { ViewState } from "./state.js";

const MAX_REQUESTS_PER_SECOND = 30;

export class JointDrag {
  private seq = 0;
  private lastSent = -Infinity;
  private trailing: [number, number, number] | null = null;
  private trailingTimer: ReturnType<typeof setTimeout> | null = null;
  dragging: number | null = null;

  constructor(
    private client: BridgeClient,
    private state: ViewState,
    private now: () => number = () => Date.now(),
  ) {}

  get minIntervalMs(): number {
    return 1000 / MAX_REQUESTS_PER_SECOND;
  }

  start(joint: number): void {
    this.dragging = joint;
    this.state.selectedJoint = joint;
  }

  /** One pointer sample in world coordinates; throttled to 30 Hz. */
  move(position: [number, number, number]): void {
    if (this.dragging === null) return;
    const t = this.now();
    if (t - this.lastSent >= this.minIntervalMs) {
      this.lastSent = t;
      this.sendMove(position);
    } else {
      // keep only the newest sample; flush it when the window reopens
      this.trailing = position;
      if (this.trailingTimer === null) {
        const wait = this.minIntervalMs - (t - this.lastSent);
        this.trailingTimer = setTimeout(() => this.flushTrailing(), wait);
      }
    }
  }

  private flushTrailing(): void {
    this.trailingTimer = null;
    if (this.trailing === null || this.dragging === null) return;
    this.lastSent = this.now();
    const pos = this.trailing;
    this.trailing = null;
    this.sendMove(pos);
  }

  private sendMove(position: [number, number, number]): void {
    if (this.dragging === null) return;
    const seq = ++this.seq;
    this.client.requestNoWait(
      {
        type: "move_joint",
        joint: this.dragging,
        position,
        pinned: [...this.state.pinnedJoints],
      },
      (msg: BridgeResponse) => {
        if (msg.type === "preview") {
          this.state.acceptPreview(seq, msg.displacement);
        }
        // error responses leave the last good preview in place
      },
    );
  }

  /** Release the pointer; the frozen preview awaits apply or undo. */
  release(): void {
    if (this.trailingTimer !== null) {
      clearTimeout(this.trailingTimer);
      this.flushTrailing();
    }
    this.dragging = null;
  }
}
