// Pointer-as-gaze: the pointer position over the canvas stands in for an eye
// tracker. Samples are sent on a fixed tick (>= 30 Hz); pointer moves between
// ticks coalesce to the latest position so a burst of events never floods the
// socket.

export interface GazeSender {
  (t: number, x: number, y: number, valid: boolean): void;
}

export class PointerGazeStream {
  private latest: { x: number; y: number; valid: boolean } | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;
  private readonly epochMs: number;
  sent = 0;

  constructor(
    private readonly send: GazeSender,
    private readonly rateHz: number = 60,
    private readonly now: () => number = () => performance.now(),
  ) {
    if (rateHz < 30) throw new Error("gaze stream must run at >= 30 Hz");
    this.epochMs = this.now();
  }

  /** Record the newest pointer position (normalized [0,1] canvas coords). */
  update(x: number, y: number, valid = true): void {
    this.latest = {
      x: Math.min(1, Math.max(0, x)),
      y: Math.min(1, Math.max(0, y)),
      valid,
    };
  }

  clockSeconds(): number {
    return (this.now() - this.epochMs) / 1000;
  }

  /** One tick: send the coalesced latest sample, if any. */
  flush(): boolean {
    if (this.latest === null) return false;
    const { x, y, valid } = this.latest;
    this.send(this.clockSeconds(), x, y, valid);
    this.sent += 1;
    this.latest = null;
    return true;
  }

  start(): void {
    if (this.timer !== null) return;
    this.timer = setInterval(() => this.flush(), 1000 / this.rateHz);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
    this.latest = null;
  }

  get running(): boolean {
    return this.timer !== null;
  }
}
