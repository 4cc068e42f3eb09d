import { describe, expect, it } from "vitest";

import { arcCenter, renderDisplayList, type Draw2D, type RenderTarget } from "../src/renderer.js";
import type { Primitive } from "../src/wire.js";

interface Call {
  op: string;
  args: unknown[];
}

function fakeContext(): { ctx: Draw2D; calls: Call[]; styles: string[] } {
  const calls: Call[] = [];
  const styles: string[] = [];
  const record =
    (op: string) =>
    (...args: unknown[]) =>
      calls.push({ op, args });
  const ctx = {
    _strokeStyle: "",
    fillStyle: "",
    lineWidth: 0,
    font: "",
    get strokeStyle() {
      return this._strokeStyle;
    },
    set strokeStyle(v: string) {
      this._strokeStyle = v;
      styles.push(v);
    },
    beginPath: record("beginPath"),
    moveTo: record("moveTo"),
    lineTo: record("lineTo"),
    arc: record("arc"),
    closePath: record("closePath"),
    stroke: record("stroke"),
    fill: record("fill"),
    fillRect: record("fillRect"),
    clearRect: record("clearRect"),
    fillText: record("fillText"),
  };
  return { ctx: ctx as unknown as Draw2D, calls, styles };
}

function target(ctx: Draw2D): RenderTarget {
  return { ctx, canvasW: 768, canvasH: 432, videoW: 384, videoH: 216 };
}

const BASICS: Primitive = {
  shape: "basics", x: 0, y: 144, w: 384, h: 72, speed_kmh: 32, clock: "14:05:00", nav: "straight",
};

describe("renderDisplayList", () => {
  it("draws a corner rectangle scaled to the canvas", () => {
    const { ctx, calls, styles } = fakeContext();
    const rect: Primitive = {
      shape: "corner_rect", color: "yellow", x: 10, y: 20, w: 50, h: 40, scale: 1, sign: 1,
    };
    const drawn = renderDisplayList(target(ctx), [rect, BASICS]);
    expect(drawn).toBe(2);
    expect(styles).toContain("#fdd835");
    // Four corner strokes plus the clear at the start.
    expect(calls.filter((c) => c.op === "stroke")).toHaveLength(4);
    expect(calls[0].op).toBe("clearRect");
    // Video x=10 scales by 768/384 = 2.
    const firstMove = calls.find((c) => c.op === "moveTo")!;
    expect(firstMove.args[1]).toBe(40); // y=20 scaled by 432/216 = 2
  });

  it("fills solid triangles and strokes hollow ones", () => {
    const { ctx, calls } = fakeContext();
    const hollow: Primitive = {
      shape: "triangle_hollow", color: "red", x: 0, y: 0, w: 30, h: 26, scale: 1, sign: 1,
    };
    const solid: Primitive = {
      shape: "triangle_solid", color: "yellow", x: 0, y: 0, w: 16, h: 14, scale: 0.5, sign: 2,
    };
    renderDisplayList(target(ctx), [hollow, solid, BASICS]);
    expect(calls.filter((c) => c.op === "fill")).toHaveLength(1);
    expect(calls.filter((c) => c.op === "stroke")).toHaveLength(1);
  });

  it("places a 45-degree arc on the upper-right periphery band", () => {
    const { x, y } = arcCenter(768, 432, 45);
    expect(x).toBeGreaterThan(768 / 2);
    expect(y).toBeLessThan(432 / 2);
    const { ctx, calls } = fakeContext();
    const arc: Primitive = { shape: "arc", color: "red", bearing: 45, sign: 1 };
    renderDisplayList(target(ctx), [arc, BASICS]);
    const arcCall = calls.find((c) => c.op === "arc")!;
    expect(arcCall.args[0]).toBe(768 / 2);
    expect(arcCall.args[1]).toBe(432 / 2);
  });

  it("skips unknown primitives with a warning but still draws the frame", () => {
    const { ctx, calls } = fakeContext();
    const warnings: string[] = [];
    const bogus = { shape: "sparkle", color: "red" } as unknown as Primitive;
    const drawn = renderDisplayList(target(ctx), [bogus, BASICS], (m) => warnings.push(m));
    expect(drawn).toBe(1);
    expect(warnings).toHaveLength(1);
    expect(warnings[0]).toMatch(/sparkle/);
    expect(calls.some((c) => c.op === "fillText")).toBe(true);
  });

  it("renders an empty list as the cleared canvas only", () => {
    const { ctx, calls } = fakeContext();
    expect(renderDisplayList(target(ctx), [])).toBe(0);
    expect(calls).toHaveLength(1);
    expect(calls[0].op).toBe("clearRect");
  });

  it("draws the basics bar at the bottom", () => {
    const { ctx, calls } = fakeContext();
    renderDisplayList(target(ctx), [BASICS]);
    const bar = calls.find((c) => c.op === "fillRect")!;
    const [, y, w] = bar.args as number[];
    expect(w).toBe(768);
    expect(y).toBeGreaterThan(432 * 0.8);
    const text = calls.find((c) => c.op === "fillText")!;
    expect(text.args[0]).toContain("32 km/h");
  });
});
