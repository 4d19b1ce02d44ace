/* Browser entry point: wires the socket, the view state, the gesture
 * machine, and the render loop to the page. The URL defaults to the local
 * serve command and can be overridden with ?ws=ws://host:port. */

import { connect, EditClient } from "./client.js";
import { DragGesture } from "./gestures.js";
import { Edit } from "./protocol.js";
import { Ctx2D, renderScene, Viewport } from "./renderer.js";
import { applyMessage, applyStatus, initialState } from "./state.js";

const PICK_RADIUS_PX = 12;
const CLICK_THRESHOLD_PX = 3;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("scene");
const slider = el<HTMLInputElement>("alpha");
const alphaLabel = el<HTMLSpanElement>("alpha-value");
const pauseButton = el<HTMLButtonElement>("pause");
const resetButton = el<HTMLButtonElement>("reset");
const statusLabel = el<HTMLSpanElement>("status");

let state = initialState();
let gesture: DragGesture | null = null;
let client: EditClient | null = null;

function wsUrl(): string {
  const override = new URLSearchParams(window.location.search).get("ws");
  return override ?? "ws://127.0.0.1:8765";
}

function sendEdit(edit: Edit): void {
  state = { ...state, lastError: null };
  client?.send(edit);
}

function viewport(): Viewport | null {
  if (!state.config) return null;
  return new Viewport(state.config.bbox, canvas.width, canvas.height);
}

function syncControls(): void {
  statusLabel.textContent = state.status;
  if (!state.config) return;
  const [lo, hi] = state.config.alpha_range;
  slider.min = String(lo);
  slider.max = String(hi);
  slider.step = String((hi - lo) / 200 || 0.005);
  // don't fight the user mid-scrub
  if (document.activeElement !== slider) {
    slider.value = String(state.frame?.alpha ?? state.config.alpha);
  }
  alphaLabel.textContent = Number(slider.value).toFixed(3);
  pauseButton.textContent = state.config.paused ? "resume" : "pause";
}

function draw(): void {
  const ctx = canvas.getContext("2d") as unknown as Ctx2D | null;
  const vp = viewport();
  if (!ctx) return;
  if (!state.config || !vp) {
    ctx.fillStyle = "#14161a";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = "#c8d1dc";
    ctx.font = "14px monospace";
    ctx.fillText(`${state.status}: ${wsUrl()}`, 12, 24);
    return;
  }
  renderScene(ctx, vp, state.config, state.frame,
              gesture?.preview() ?? null, state.lastError);
}

function loop(): void {
  syncControls();
  draw();
  requestAnimationFrame(loop);
}

function pointerWorld(ev: PointerEvent): number[] | null {
  const vp = viewport();
  if (!vp || !state.config) return null;
  const rect = canvas.getBoundingClientRect();
  const x = ((ev.clientX - rect.left) / rect.width) * canvas.width;
  const y = ((ev.clientY - rect.top) / rect.height) * canvas.height;
  return vp.toWorld(x, y, state.config.dimension);
}

canvas.addEventListener("pointerdown", (ev) => {
  const vp = viewport();
  const world = pointerWorld(ev);
  if (!vp || !world || !state.config) return;
  gesture = new DragGesture(state.config, CLICK_THRESHOLD_PX / vp.scale);
  if (gesture.down(world, PICK_RADIUS_PX / vp.scale)) {
    canvas.setPointerCapture(ev.pointerId);
  } else {
    gesture = null;
  }
});

canvas.addEventListener("pointermove", (ev) => {
  const world = pointerWorld(ev);
  if (gesture && world) gesture.move(world);
});

canvas.addEventListener("pointerup", () => {
  const edit = gesture?.up() ?? null;
  gesture = null;
  if (edit) sendEdit(edit); // one edit per completed drag
});

canvas.addEventListener("pointercancel", () => {
  gesture?.cancel();
  gesture = null;
});

slider.addEventListener("input", () => {
  alphaLabel.textContent = Number(slider.value).toFixed(3);
});

// change fires once on release: one edit per scrub
slider.addEventListener("change", () => {
  sendEdit({ type: "set_alpha", alpha: Number(slider.value) });
});

pauseButton.addEventListener("click", () => {
  if (!state.config) return;
  sendEdit({ type: state.config.paused ? "resume" : "pause" });
});

resetButton.addEventListener("click", () => sendEdit({ type: "reset" }));

window.addEventListener("keydown", (ev) => {
  if (ev.target instanceof HTMLInputElement) return;
  if (ev.code === "Space") {
    ev.preventDefault();
    pauseButton.click();
  } else if (ev.key === "r") {
    resetButton.click();
  }
});

client = connect(wsUrl(), {
  onStatus: (status) => {
    state = applyStatus(state, status);
  },
  onMessage: (msg) => {
    state = applyMessage(state, msg);
  },
});

loop();
