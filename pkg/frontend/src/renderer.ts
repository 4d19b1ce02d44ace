/* Canvas drawing. All geometry goes through a Viewport that fits the scene
 * bounding box into the canvas with preserved aspect ratio; 1D scenes are
 * drawn as a horizontal strip. The 2D context is typed structurally so the
 * draw code is testable against a recording stub. */

import { Config, Frame, Vec } from "./protocol.js";
import { DragPreview } from "./gestures.js";

export interface Ctx2D {
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  setLineDash(segments: number[]): void;
  fillText(text: string, x: number, y: number): void;
  strokeStyle: string;
  fillStyle: string;
  lineWidth: number;
  font: string;
}

// 1D scenes are drawn on a strip this tall (world units)
const STRIP_HALF_HEIGHT = 0.08;

export class Viewport {
  readonly scale: number;
  private ox: number;
  private oy: number;
  private lo: Vec;
  private hi: Vec;
  readonly width: number;
  readonly height: number;

  constructor(bbox: [Vec, Vec], width: number, height: number, margin = 24) {
    this.width = width;
    this.height = height;
    const d = bbox[0].length;
    this.lo = d === 1 ? [bbox[0][0], -STRIP_HALF_HEIGHT] : [...bbox[0]];
    this.hi = d === 1 ? [bbox[1][0], STRIP_HALF_HEIGHT] : [...bbox[1]];
    const wx = Math.max(this.hi[0] - this.lo[0], 1e-12);
    const wy = Math.max(this.hi[1] - this.lo[1], 1e-12);
    this.scale = Math.min(
      (width - 2 * margin) / wx,
      (height - 2 * margin) / wy,
    );
    // center the scene
    this.ox = (width - this.scale * (this.lo[0] + this.hi[0])) / 2;
    this.oy = (height + this.scale * (this.lo[1] + this.hi[1])) / 2;
  }

  /** World point (1D or 2D) to canvas pixels; canvas y points down. */
  toScreen(p: Vec): [number, number] {
    const y = p.length > 1 ? p[1] : 0;
    return [this.ox + this.scale * p[0], this.oy - this.scale * y];
  }

  toWorld(x: number, y: number, dimension: number): Vec {
    const wx = (x - this.ox) / this.scale;
    const wy = (this.oy - y) / this.scale;
    return dimension === 1 ? [wx] : [wx, wy];
  }
}

const COLORS = {
  background: "#14161a",
  domain: "#1e2128",
  domainEdge: "#3a3f4a",
  crease: "#f0a030",
  creaseGrip: "#ffd080",
  cut: "#e05050",
  tracerNeg: "#58a6ff",
  tracerPos: "#56d364",
  tracerUniform: "#9fb2c8",
  handle: "#ff4545",
  handleAnchor: "#ff9090",
  text: "#c8d1dc",
  warn: "#ffb84d",
};

function polyline(ctx: Ctx2D, vp: Viewport, pts: Vec[]): void {
  ctx.beginPath();
  pts.forEach((p, i) => {
    const [x, y] = vp.toScreen(p);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}

function dot(ctx: Ctx2D, vp: Viewport, p: Vec, r: number): void {
  const [x, y] = vp.toScreen(p);
  ctx.beginPath();
  ctx.arc(x, y, r, 0, 2 * Math.PI);
  ctx.fill();
}

export function tracerColor(side: number): string {
  if (side < 0) return COLORS.tracerNeg;
  if (side > 0) return COLORS.tracerPos;
  return COLORS.tracerUniform;
}

export function renderScene(
  ctx: Ctx2D,
  vp: Viewport,
  config: Config,
  frame: Frame | null,
  preview: DragPreview | null,
  lastError: string | null,
): void {
  ctx.setLineDash([]);
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, vp.width, vp.height);

  // domain box (1D scenes get the viewport's strip height)
  const lo =
    config.dimension === 1
      ? [config.bbox[0][0], -STRIP_HALF_HEIGHT]
      : config.bbox[0];
  const hi =
    config.dimension === 1
      ? [config.bbox[1][0], STRIP_HALF_HEIGHT]
      : config.bbox[1];
  const [x0, y0] = vp.toScreen(lo);
  const [x1, y1] = vp.toScreen(hi);
  ctx.fillStyle = COLORS.domain;
  ctx.fillRect(x0, y1, x1 - x0, y0 - y1);
  ctx.strokeStyle = COLORS.domainEdge;
  ctx.lineWidth = 1;
  ctx.strokeRect(x0, y1, x1 - x0, y0 - y1);

  // cut polyline (value discontinuity), dashed
  if (config.cut !== null && config.cut.length >= 2) {
    ctx.strokeStyle = COLORS.cut;
    ctx.lineWidth = 2;
    ctx.setLineDash([6, 4]);
    polyline(ctx, vp, config.cut);
    ctx.setLineDash([]);
  }

  // crease (gradient discontinuity) with draggable endpoint grips
  const crease = preview?.crease ?? config.crease;
  if (crease.length >= 2) {
    ctx.strokeStyle = COLORS.crease;
    ctx.lineWidth = 2;
    polyline(ctx, vp, crease);
    ctx.fillStyle = COLORS.creaseGrip;
    for (const v of crease) dot(ctx, vp, v, 5);
  } else if (crease.length === 1) {
    ctx.fillStyle = COLORS.crease;
    dot(ctx, vp, crease[0], 4);
  }

  // tracers at their frame positions, colored by material side
  const tracers = frame?.tracers ?? config.tracers;
  tracers.forEach((p, i) => {
    ctx.fillStyle = tracerColor(config.tracer_side[i] ?? 0);
    dot(ctx, vp, p, 3);
  });

  // handles: anchor cross + draggable target square for pins
  config.handles.forEach((h, i) => {
    for (const p of h.points) {
      const [x, y] = vp.toScreen(p);
      ctx.strokeStyle = COLORS.handleAnchor;
      ctx.lineWidth = 1;
      ctx.beginPath();
      ctx.moveTo(x - 4, y);
      ctx.lineTo(x + 4, y);
      ctx.moveTo(x, y - 4);
      ctx.lineTo(x, y + 4);
      ctx.stroke();
    }
    if (h.kind === "pin" && Array.isArray(h.target)) {
      const t =
        preview?.target.kind === "handle" &&
        preview.target.index === i &&
        preview.handleTarget
          ? preview.handleTarget
          : h.target;
      const [x, y] = vp.toScreen(t);
      ctx.fillStyle = COLORS.handle;
      ctx.fillRect(x - 4, y - 4, 8, 8);
    }
  });

  // status line
  ctx.font = "12px monospace";
  ctx.fillStyle = COLORS.text;
  const step = frame?.step ?? config.step;
  const alpha = frame?.alpha ?? config.alpha;
  const flags = [
    config.paused ? "paused" : "running",
    (frame?.out_of_family ?? config.out_of_family) ? "out of family" : "",
    frame?.note ?? "",
  ]
    .filter((s) => s.length > 0)
    .join("  |  ");
  ctx.fillText(
    `step ${step}   alpha ${alpha.toFixed(3)}   ${flags}`,
    8,
    16,
  );
  if (lastError !== null) {
    ctx.fillStyle = COLORS.warn;
    ctx.fillText(`rejected: ${lastError}`, 8, 32);
  }
}
