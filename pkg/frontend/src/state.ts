/* Pure view state: the latest config, the latest frame, connection status,
 * and the last rejection reason. A reducer over server messages keeps the
 * render loop a plain function of this object. */

import { Config, Frame, ServerMessage } from "./protocol.js";
import { Status } from "./client.js";

export interface AppState {
  status: Status;
  serverVersion: number | null;
  config: Config | null;
  frame: Frame | null;
  lastError: string | null;
}

export function initialState(): AppState {
  return {
    status: "connecting",
    serverVersion: null,
    config: null,
    frame: null,
    lastError: null,
  };
}

export function applyStatus(state: AppState, status: Status): AppState {
  return { ...state, status };
}

export function applyMessage(state: AppState, msg: ServerMessage): AppState {
  switch (msg.type) {
    case "hello":
      return { ...state, serverVersion: msg.version };
    case "config":
      return { ...state, config: msg };
    case "frame":
      // frames may arrive coalesced; never step the view backwards
      if (state.frame !== null && msg.step < state.frame.step) return state;
      return { ...state, frame: msg };
    case "ack":
      if (msg.ok) return state;
      return { ...state, lastError: msg.reason ?? "edit rejected" };
  }
}
