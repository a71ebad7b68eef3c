/** The cockpit state machine: socket lifecycle, keyboard capture with a
 * combo window, outbound action queue, and the session telemetry view model.
 *
 * Deliberately DOM-free: all IO (sockets, timers, logging) is injected, so
 * the whole interaction loop is scriptable in tests. The server owns every
 * piece of world state; this class only mirrors what it is told.
 */

import {
  ActionParams, FrameMsg, PROTOCOL, ServerMessage, SteppedMsg,
  parseServerMessage, poseReadout,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
}

export interface SocketHandlers {
  onOpen(): void;
  onMessage(data: string): void;
  onClose(): void;
}

export interface CockpitIO {
  openSocket(handlers: SocketHandlers): SocketLike;
  now(): number;
  setTimer(fn: () => void, ms: number): number;
  clearTimer(id: number): void;
  log(message: string): void;
}

export type Status = "idle" | "connecting" | "interactive" | "disconnected" | "error";

export interface CockpitState {
  status: Status;
  statusDetail: string;
  step: number; // never decreases
  lastFrame: FrameMsg | null; // highest (step, k) received
  pose: { position: [number, number, number]; yawDeg: number } | null;
  cache: { occupancy: number; retrieved: [number, number][]; evictions: number[] };
  queueDepth: number; // actions sent, not yet answered
  pendingOffline: number; // actions queued while disconnected
  droppedFrames: number; // decode failures, reported by the view
  outOfOrderFrames: number;
  protocolViolations: number;
  sessionId: string | null;
  intrinsics: { width: number; height: number } | null;
  serverFrames: number | null; // f announced by the server
  notices: string[];
}

export const COMBO_WINDOW_MS = 50;
export const OFFLINE_DISCARD_MS = 5000;
const WASD = "WASD";

export class Cockpit {
  private io: CockpitIO;
  private initPayload: Record<string, unknown>;
  private socket: SocketLike | null = null;
  private open = false;
  private comboKeys = new Set<string>();
  private comboTimer: number | null = null;
  private offlineQueue: { message: string; queuedAt: number; timer: number }[] = [];
  private listeners: (() => void)[] = [];

  params: ActionParams = {};
  state: CockpitState = {
    status: "idle",
    statusDetail: "",
    step: 0,
    lastFrame: null,
    pose: null,
    cache: { occupancy: 0, retrieved: [], evictions: [] },
    queueDepth: 0,
    pendingOffline: 0,
    droppedFrames: 0,
    outOfOrderFrames: 0,
    protocolViolations: 0,
    sessionId: null,
    intrinsics: null,
    serverFrames: null,
    notices: [],
  };

  constructor(io: CockpitIO, initPayload: Record<string, unknown> = {}) {
    this.io = io;
    this.initPayload = initPayload;
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private changed(): void {
    for (const fn of this.listeners) fn();
  }

  private notice(text: string): void {
    this.state.notices.push(text);
    if (this.state.notices.length > 8) this.state.notices.shift();
    this.io.log(text);
  }

  connect(): void {
    if (this.socket !== null) return;
    this.state.status = "connecting";
    this.state.statusDetail = "";
    this.changed();
    try {
      this.socket = this.io.openSocket({
        onOpen: () => this.handleOpen(),
        onMessage: (data) => this.handleMessage(data),
        onClose: () => this.handleClose(),
      });
    } catch (err) {
      this.socket = null;
      this.state.status = "disconnected";
      this.state.statusDetail = String(err);
      this.changed();
    }
  }

  retry(): void {
    this.connect();
  }

  private handleOpen(): void {
    this.open = true;
    this.socket!.send(JSON.stringify({ proto: PROTOCOL, type: "init", ...this.initPayload }));
  }

  private handleClose(): void {
    this.open = false;
    this.socket = null;
    if (this.state.status !== "error") {
      this.state.status = "disconnected";
      this.state.statusDetail = "connection lost; retry to reconnect";
    }
    this.changed();
  }

  private handleMessage(data: string): void {
    const msg = parseServerMessage(data);
    if (msg === null) {
      this.state.protocolViolations += 1;
      this.notice("dropped unparseable server message");
      this.changed();
      return;
    }
    switch (msg.type) {
      case "ready":
        if (msg.proto !== PROTOCOL) {
          this.state.status = "error";
          this.state.statusDetail = `protocol mismatch: server speaks ${msg.proto}`;
          break;
        }
        this.state.status = "interactive";
        this.state.statusDetail = "";
        this.state.sessionId = msg.session;
        this.state.intrinsics = { width: msg.intrinsics.width, height: msg.intrinsics.height };
        this.state.serverFrames = msg.frames;
        this.flushOffline();
        break;
      case "frame":
        this.acceptFrame(msg);
        break;
      case "retrieval":
        this.state.cache.retrieved = msg.entries;
        break;
      case "stepped":
        this.acceptStepped(msg);
        break;
      case "error":
        this.state.queueDepth = Math.max(0, this.state.queueDepth - 1);
        if (msg.code === "bad_protocol") {
          this.state.status = "error";
          this.state.statusDetail = msg.message;
        } else {
          this.notice(`server error ${msg.code}: ${msg.message}`);
        }
        break;
    }
    this.changed();
  }

  private acceptFrame(msg: FrameMsg): void {
    const last = this.state.lastFrame;
    if (last !== null && (msg.step < last.step || (msg.step === last.step && msg.k <= last.k))) {
      this.state.outOfOrderFrames += 1;
      this.io.log(`dropped out-of-order frame (step ${msg.step}, k ${msg.k})`);
      return;
    }
    this.state.lastFrame = msg;
    this.state.pose = poseReadout(msg.pose);
  }

  private acceptStepped(msg: SteppedMsg): void {
    this.state.step = Math.max(this.state.step, msg.step); // displayed step never decreases
    this.state.cache.occupancy = msg.occupancy;
    this.state.cache.evictions = msg.evictions;
    this.state.queueDepth = Math.max(0, this.state.queueDepth - 1);
  }

  /** Feed a keydown. WASD keys accumulate for one combo window and are sent
   * as a single action; anything else is ignored. */
  keydown(key: string, repeat = false): void {
    const upper = key.toUpperCase();
    if (repeat || !WASD.includes(upper) || upper.length !== 1) return;
    this.comboKeys.add(upper);
    if (this.comboTimer === null) {
      this.comboTimer = this.io.setTimer(() => this.fireCombo(), COMBO_WINDOW_MS);
    }
  }

  private fireCombo(): void {
    this.comboTimer = null;
    const keys = [...WASD].filter((k) => this.comboKeys.has(k)).join("");
    this.comboKeys.clear();
    if (keys.length === 0) return;
    this.sendAction(keys);
  }

  /** Send one action with the current parameter overrides. */
  sendAction(keys: string): void {
    const message = JSON.stringify({ type: "action", keys, ...this.cleanParams() });
    if (this.open && this.socket !== null) {
      this.socket.send(message);
      this.state.queueDepth += 1;
    } else {
      const entry = {
        message,
        queuedAt: this.io.now(),
        timer: this.io.setTimer(() => this.discardOffline(message), OFFLINE_DISCARD_MS),
      };
      this.offlineQueue.push(entry);
      this.state.pendingOffline = this.offlineQueue.length;
      this.notice("not connected; action queued");
    }
    this.changed();
  }

  reset(): void {
    if (this.open && this.socket !== null) {
      this.socket.send(JSON.stringify({ type: "reset" }));
    }
  }

  private cleanParams(): ActionParams {
    const out: ActionParams = {};
    if (this.params.eta !== undefined) out.eta = this.params.eta;
    if (this.params.theta_deg !== undefined) out.theta_deg = this.params.theta_deg;
    if (this.params.frames !== undefined) out.frames = this.params.frames;
    return out;
  }

  private discardOffline(message: string): void {
    const idx = this.offlineQueue.findIndex((e) => e.message === message);
    if (idx >= 0) {
      this.offlineQueue.splice(idx, 1);
      this.state.pendingOffline = this.offlineQueue.length;
      this.notice("queued action discarded after 5 s offline");
      this.changed();
    }
  }

  private flushOffline(): void {
    for (const entry of this.offlineQueue) {
      this.io.clearTimer(entry.timer);
      this.socket!.send(entry.message);
      this.state.queueDepth += 1;
    }
    this.offlineQueue = [];
    this.state.pendingOffline = 0;
  }

  /** The view reports frames it failed to decode; they are skipped. */
  noteDecodeFailure(): void {
    this.state.droppedFrames += 1;
    this.changed();
  }
}
