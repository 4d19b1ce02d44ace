/* Socket wrapper: numbers outgoing edits, pairs acks back to them.
 *
 * The transport is injected through a minimal interface so tests drive the
 * client without a network or a browser.
 */

import { Ack, Edit, parseServerMessage, ServerMessage } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type Status = "connecting" | "open" | "closed";

export interface ClientEvents {
  onMessage?: (msg: ServerMessage) => void;
  // every ack, paired with the edit it answers (undefined for unknown ids)
  onAck?: (ack: Ack, edit: Edit | undefined) => void;
  onStatus?: (status: Status) => void;
}

export class EditClient {
  private nextId = 1;
  private pendingById = new Map<number, Edit>();
  private socket: SocketLike;
  private events: ClientEvents;

  constructor(socket: SocketLike, events: ClientEvents = {}) {
    this.socket = socket;
    this.events = events;
    events.onStatus?.("connecting");
    socket.onopen = () => events.onStatus?.("open");
    socket.onclose = () => events.onStatus?.("closed");
    socket.onerror = () => events.onStatus?.("closed");
    socket.onmessage = (ev) => this.receive(String(ev.data));
  }

  /** Send one edit; returns the id it will be acknowledged under. */
  send(edit: Edit): number {
    const id = this.nextId++;
    this.pendingById.set(id, edit);
    this.socket.send(JSON.stringify({ ...edit, id }));
    return id;
  }

  pendingCount(): number {
    return this.pendingById.size;
  }

  close(): void {
    this.socket.close();
  }

  private receive(text: string): void {
    const msg = parseServerMessage(text);
    if (msg === null) return; // unknown or malformed: ignore, stay connected
    if (msg.type === "ack") {
      let edit: Edit | undefined;
      if (typeof msg.id === "number" && this.pendingById.has(msg.id)) {
        edit = this.pendingById.get(msg.id);
        this.pendingById.delete(msg.id);
      }
      this.events.onAck?.(msg, edit);
    }
    this.events.onMessage?.(msg);
  }
}

/** Open a browser WebSocket and wrap it. Separated from the constructor so
 * tests can pass a stub socket instead. */
export function connect(url: string, events: ClientEvents): EditClient {
  return new EditClient(new WebSocket(url) as unknown as SocketLike, events);
}
