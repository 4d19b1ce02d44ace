/* Pointer gesture state machine, free of DOM types.
 *
 * A drag previews locally while the pointer moves and emits exactly one
 * edit on pointer-up; a press that never leaves the click threshold emits
 * nothing. main.ts feeds it world-space positions.
 */

import { Config, Edit, Vec } from "./protocol.js";

export type PickTarget =
  | { kind: "crease"; index: number }
  | { kind: "handle"; index: number };

function dist(a: Vec, b: Vec): number {
  let s = 0;
  for (let i = 0; i < a.length; i++) s += (a[i] - b[i]) ** 2;
  return Math.sqrt(s);
}

/** Nearest draggable feature within radius: crease vertices (2D scenes) and
 * pin-handle targets. Pair and gravity handles have no point target. */
export function pick(
  config: Config,
  world: Vec,
  radius: number,
): PickTarget | null {
  let best: PickTarget | null = null;
  let bestD = radius;
  if (config.dimension === 2) {
    config.crease.forEach((v, i) => {
      const d = dist(v, world);
      if (d <= bestD) {
        best = { kind: "crease", index: i };
        bestD = d;
      }
    });
  }
  config.handles.forEach((h, i) => {
    if (h.kind !== "pin" || !Array.isArray(h.target)) return;
    const d = dist(h.target, world);
    if (d <= bestD) {
      best = { kind: "handle", index: i };
      bestD = d;
    }
  });
  return best;
}

export interface DragPreview {
  target: PickTarget;
  crease?: Vec[]; // crease with the dragged vertex substituted
  handleTarget?: Vec;
}

export class DragGesture {
  private config: Config;
  private clickThreshold: number;
  private target: PickTarget | null = null;
  private start: Vec | null = null;
  private current: Vec | null = null;

  constructor(config: Config, clickThreshold = 0.0) {
    this.config = config;
    this.clickThreshold = clickThreshold;
  }

  /** True when the press grabbed something draggable. */
  down(world: Vec, radius: number): boolean {
    this.target = pick(this.config, world, radius);
    this.start = this.target ? [...world] : null;
    this.current = this.start;
    return this.target !== null;
  }

  move(world: Vec): void {
    if (this.target) this.current = [...world];
  }

  active(): boolean {
    return this.target !== null;
  }

  preview(): DragPreview | null {
    if (!this.target || !this.current) return null;
    if (this.target.kind === "crease") {
      const crease = this.config.crease.map((v) => [...v]);
      crease[this.target.index] = [...this.current];
      return { target: this.target, crease };
    }
    return { target: this.target, handleTarget: [...this.current] };
  }

  /** End the gesture. Returns the one edit it produced, or null when the
   * pointer never moved past the click threshold. */
  up(): Edit | null {
    const preview = this.preview();
    const moved =
      this.start !== null &&
      this.current !== null &&
      dist(this.start, this.current) > this.clickThreshold;
    this.target = null;
    this.start = null;
    this.current = null;
    if (!preview || !moved) return null;
    if (preview.target.kind === "crease") {
      return { type: "set_crease", vertices: preview.crease as Vec[] };
    }
    return {
      type: "move_handle",
      handle: preview.target.index,
      target: preview.handleTarget as Vec,
    };
  }

  cancel(): void {
    this.target = null;
    this.start = null;
    this.current = null;
  }
}
