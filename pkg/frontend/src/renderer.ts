// Draws server-sent display lists onto a 2D canvas. The renderer holds no
// sign state of its own: whatever arrives in the frame message is what
// appears, scaled from video pixels to canvas pixels.

import type { Primitive } from "./wire.js";

// Minimal slice of CanvasRenderingContext2D so tests can record draw calls.
export interface Draw2D {
  strokeStyle: string;
  fillStyle: string;
  lineWidth: number;
  font: string;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  closePath(): void;
  stroke(): void;
  fill(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
}

export interface RenderTarget {
  ctx: Draw2D;
  canvasW: number;
  canvasH: number;
  videoW: number;
  videoH: number;
}

const COLORS: Record<string, string> = { red: "#e53935", yellow: "#fdd835" };

export function renderDisplayList(
  target: RenderTarget,
  list: Primitive[],
  warn: (message: string) => void = (m) => console.warn(m),
): number {
  const { ctx, canvasW, canvasH, videoW, videoH } = target;
  const sx = canvasW / videoW;
  const sy = canvasH / videoH;
  ctx.clearRect(0, 0, canvasW, canvasH);
  let drawn = 0;
  for (const p of list) {
    switch (p.shape) {
      case "corner_rect":
        drawCornerRect(ctx, p.x * sx, p.y * sy, p.w * sx, p.h * sy, COLORS[p.color]);
        break;
      case "triangle_hollow":
        drawTriangle(ctx, p.x * sx, p.y * sy, p.w * sx, p.h * sy, COLORS[p.color], false);
        break;
      case "triangle_solid":
        drawTriangle(ctx, p.x * sx, p.y * sy, p.w * sx, p.h * sy, COLORS[p.color], true);
        break;
      case "arc":
        drawGuidanceArc(ctx, canvasW, canvasH, p.bearing, COLORS[p.color]);
        break;
      case "basics":
        drawBasics(ctx, canvasW, canvasH, p.speed_kmh, p.clock, p.nav);
        break;
      default:
        warn(`skipping unknown primitive ${(p as { shape?: string }).shape}`);
        continue;
    }
    drawn += 1;
  }
  return drawn;
}

function drawCornerRect(ctx: Draw2D, x: number, y: number, w: number, h: number, color: string): void {
  const len = Math.min(w, h) * 0.28;
  ctx.strokeStyle = color;
  ctx.lineWidth = 3;
  const corners: Array<[number, number, number, number]> = [
    [x, y, 1, 1],
    [x + w, y, -1, 1],
    [x, y + h, 1, -1],
    [x + w, y + h, -1, -1],
  ];
  for (const [cx, cy, dx, dy] of corners) {
    ctx.beginPath();
    ctx.moveTo(cx + dx * len, cy);
    ctx.lineTo(cx, cy);
    ctx.lineTo(cx, cy + dy * len);
    ctx.stroke();
  }
}

function drawTriangle(ctx: Draw2D, x: number, y: number, w: number, h: number, color: string, solid: boolean): void {
  ctx.beginPath();
  ctx.moveTo(x + w / 2, y);
  ctx.lineTo(x + w, y + h);
  ctx.lineTo(x, y + h);
  ctx.closePath();
  if (solid) {
    ctx.fillStyle = color;
    ctx.fill();
  } else {
    ctx.strokeStyle = color;
    ctx.lineWidth = 3;
    ctx.stroke();
  }
}

/** Bearing is compass-style (0 = up, clockwise); the cue sits on a peripheral
 * ring and spans ~50 degrees around the bearing direction. */
export function arcCenter(canvasW: number, canvasH: number, bearingDeg: number): { x: number; y: number } {
  const radius = Math.min(canvasW, canvasH) * 0.42;
  const rad = (bearingDeg * Math.PI) / 180;
  return {
    x: canvasW / 2 + radius * Math.sin(rad),
    y: canvasH / 2 - radius * Math.cos(rad),
  };
}

function drawGuidanceArc(ctx: Draw2D, canvasW: number, canvasH: number, bearingDeg: number, color: string): void {
  const radius = Math.min(canvasW, canvasH) * 0.42;
  // Canvas arcs measure from +x; compass 0 is up, so shift by -90 degrees.
  const center = (bearingDeg - 90) * (Math.PI / 180);
  const halfSpan = (25 * Math.PI) / 180;
  ctx.strokeStyle = color;
  ctx.lineWidth = 6;
  ctx.beginPath();
  ctx.arc(canvasW / 2, canvasH / 2, radius, center - halfSpan, center + halfSpan);
  ctx.stroke();
}

function drawBasics(ctx: Draw2D, canvasW: number, canvasH: number, speed: number, clock: string, nav: string): void {
  const barH = Math.max(28, canvasH * 0.09);
  ctx.fillStyle = "rgba(20, 24, 28, 0.75)";
  ctx.fillRect(0, canvasH - barH, canvasW, barH);
  ctx.fillStyle = "#e8f0f2";
  ctx.font = `${Math.round(barH * 0.5)}px system-ui, sans-serif`;
  const navGlyph = nav === "left" ? "←" : nav === "right" ? "→" : "↑";
  ctx.fillText(
    `${Math.round(speed)} km/h    ${clock}    ${navGlyph}`,
    canvasW * 0.04,
    canvasH - barH * 0.32,
  );
}
