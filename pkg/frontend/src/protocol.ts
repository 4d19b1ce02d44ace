/* Message schema of the live endpoint ("creaselift/1").
 *
 * One JSON object per WebSocket text frame, both directions. The server
 * sends hello, config, frame, ack; the client sends edits, each answered
 * by exactly one ack echoing the edit's id.
 */

export const PROTOCOL_NAME = "creaselift/1";

export type Vec = number[];

export interface Hello {
  type: "hello";
  protocol: string;
  version: number;
}

export interface HandleConfig {
  kind: "pin" | "pair" | "gravity";
  stiffness: number;
  points: Vec[];
  // pin: target point; pair: rest length; gravity: acceleration vector
  target: Vec | number;
}

export interface MaterialConfig {
  kind: "uniform" | "interface_side";
  w?: number;
  w_neg?: number;
  w_pos?: number;
}

export interface Config {
  type: "config";
  step: number;
  name: string;
  dimension: number;
  bbox: [Vec, Vec];
  alpha: number;
  alpha_range: [number, number];
  crease: Vec[];
  cut: Vec[] | null;
  tracers: Vec[];
  tracer_side: number[];
  handles: HandleConfig[];
  material: MaterialConfig;
  paused: boolean;
  out_of_family: boolean;
}

export interface Frame {
  type: "frame";
  step: number;
  alpha: number;
  tracers: Vec[];
  note: string;
  out_of_family: boolean;
}

export interface Ack {
  type: "ack";
  id: unknown;
  ok: boolean;
  applies_at_step?: number;
  reason?: string;
}

export type ServerMessage = Hello | Config | Frame | Ack;

export type Edit =
  | { type: "set_alpha"; alpha: number }
  | { type: "set_crease"; vertices: Vec[] }
  | { type: "move_handle"; handle: number; target: Vec }
  | { type: "pause" }
  | { type: "resume" }
  | { type: "reset" };

function isRecord(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function isVec(v: unknown): v is Vec {
  return Array.isArray(v) && v.every((x) => typeof x === "number");
}

function isVecList(v: unknown): v is Vec[] {
  return Array.isArray(v) && v.every(isVec);
}

// Required fields per server message type; extra fields are tolerated so the
// client survives additive protocol growth.
const CHECKS: Record<string, (m: Record<string, unknown>) => boolean> = {
  hello: (m) => typeof m.protocol === "string" && typeof m.version === "number",
  config: (m) =>
    typeof m.step === "number" &&
    typeof m.dimension === "number" &&
    Array.isArray(m.bbox) &&
    m.bbox.length === 2 &&
    isVec(m.bbox[0]) &&
    isVec(m.bbox[1]) &&
    typeof m.alpha === "number" &&
    isVec(m.alpha_range) &&
    m.alpha_range.length === 2 &&
    isVecList(m.crease) &&
    (m.cut === null || isVecList(m.cut)) &&
    isVecList(m.tracers) &&
    isVec(m.tracer_side) &&
    Array.isArray(m.handles) &&
    typeof m.paused === "boolean",
  frame: (m) =>
    typeof m.step === "number" &&
    typeof m.alpha === "number" &&
    isVecList(m.tracers),
  ack: (m) => typeof m.ok === "boolean",
};

/** Parse one line/frame of server JSON; null when it is not a well-formed
 * message of a known type. */
export function parseServerMessage(text: string): ServerMessage | null {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    return null;
  }
  if (!isRecord(raw) || typeof raw.type !== "string") return null;
  const check = CHECKS[raw.type];
  if (!check || !check(raw)) return null;
  return raw as unknown as ServerMessage;
}
