import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { PointerGazeStream } from "../src/gaze.js";

describe("PointerGazeStream", () => {
  it("rejects rates below 30 Hz", () => {
    expect(() => new PointerGazeStream(() => {}, 10)).toThrow(/30 Hz/);
  });

  it("coalesces pointer moves to the latest sample per tick", () => {
    const sent: Array<[number, number, number, boolean]> = [];
    let nowMs = 1000;
    const stream = new PointerGazeStream(
      (t, x, y, valid) => sent.push([t, x, y, valid]),
      60,
      () => nowMs,
    );
    stream.update(0.1, 0.1);
    stream.update(0.2, 0.2);
    stream.update(0.3, 0.4);
    nowMs = 1100;
    expect(stream.flush()).toBe(true);
    expect(sent).toHaveLength(1);
    expect(sent[0]).toEqual([0.1, 0.3, 0.4, true]);
    // Nothing new: a tick without pointer movement sends nothing.
    expect(stream.flush()).toBe(false);
    expect(sent).toHaveLength(1);
  });

  it("clamps coordinates into [0, 1] and forwards invalid samples", () => {
    const sent: Array<[number, number, number, boolean]> = [];
    const stream = new PointerGazeStream((t, x, y, valid) => sent.push([t, x, y, valid]), 60, () => 0);
    stream.update(-0.5, 1.7, false);
    stream.flush();
    expect(sent[0][1]).toBe(0);
    expect(sent[0][2]).toBe(1);
    expect(sent[0][3]).toBe(false);
  });

  describe("with timers", () => {
    beforeEach(() => vi.useFakeTimers());
    afterEach(() => vi.useRealTimers());

    it("sends at the configured rate while running and stops cleanly", () => {
      const sent: number[] = [];
      const stream = new PointerGazeStream((t) => sent.push(t), 50, () => Date.now());
      stream.start();
      expect(stream.running).toBe(true);
      for (let i = 0; i < 10; i++) {
        stream.update(0.5, 0.5);
        vi.advanceTimersByTime(20);
      }
      expect(sent.length).toBe(10); // 50 Hz tick, one coalesced sample each
      stream.stop();
      expect(stream.running).toBe(false);
      stream.update(0.5, 0.5);
      vi.advanceTimersByTime(100);
      expect(sent.length).toBe(10); // stopped: no further sends
    });
  });
});
