import { describe, expect, it } from "vitest";

import {
  COMBO_WINDOW_MS, Cockpit, CockpitIO, OFFLINE_DISCARD_MS, SocketHandlers, SocketLike,
} from "../src/cockpit.js";
import { PROTOCOL, parseServerMessage, poseReadout } from "../src/protocol.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closed = false;
  constructor(public handlers: SocketHandlers) {}
  send(data: string): void {
    this.sent.push(data);
  }
  close(): void {
    this.closed = true;
    this.handlers.onClose();
  }
}

class FakeIO implements CockpitIO {
  time = 0;
  sockets: FakeSocket[] = [];
  logs: string[] = [];
  private timers = new Map<number, { at: number; fn: () => void }>();
  private nextId = 1;

  openSocket(handlers: SocketHandlers): SocketLike {
    const socket = new FakeSocket(handlers);
    this.sockets.push(socket);
    return socket;
  }
  now(): number {
    return this.time;
  }
  setTimer(fn: () => void, ms: number): number {
    const id = this.nextId++;
    this.timers.set(id, { at: this.time + ms, fn });
    return id;
  }
  clearTimer(id: number): void {
    this.timers.delete(id);
  }
  log(message: string): void {
    this.logs.push(message);
  }
  advance(ms: number): void {
    const deadline = this.time + ms;
    for (;;) {
      let due: [number, { at: number; fn: () => void }] | null = null;
      for (const entry of this.timers.entries()) {
        if (entry[1].at <= deadline && (due === null || entry[1].at < due[1].at)) {
          due = entry;
        }
      }
      if (due === null) break;
      this.time = due[1].at;
      this.timers.delete(due[0]);
      due[1].fn();
    }
    this.time = deadline;
  }

  get socket(): FakeSocket {
    return this.sockets[this.sockets.length - 1];
  }
}

const IDENTITY_POSE = { R: [1, 0, 0, 0, 1, 0, 0, 0, 1], t: [0, 0, 0] };

function readyMessage(frames = 3): string {
  return JSON.stringify({
    type: "ready", proto: PROTOCOL, session: "abc123",
    intrinsics: { fx: 80, fy: 80, cx: 79.5, cy: 47.5, width: 160, height: 96 },
    frames,
  });
}

/** Feed a full step's server traffic: f frames, retrieval, stepped. */
function serveStep(io: FakeIO, step: number, frames = 3,
                   retrieved: [number, number][] = [[0, 1.0]],
                   occupancy = step + 1): void {
  const handlers = io.socket.handlers;
  for (let k = 1; k <= frames; k++) {
    handlers.onMessage(JSON.stringify({
      type: "frame", step, k, png_b64: `frame-${step}-${k}`, pose: IDENTITY_POSE,
    }));
  }
  handlers.onMessage(JSON.stringify({ type: "retrieval", step, entries: retrieved }));
  handlers.onMessage(JSON.stringify({
    type: "stepped", step, occupancy, evictions: [],
  }));
}

function connectReady(io: FakeIO, frames = 3): Cockpit {
  const cockpit = new Cockpit(io);
  cockpit.connect();
  io.socket.handlers.onOpen();
  io.socket.handlers.onMessage(readyMessage(frames));
  return cockpit;
}

function sentActions(io: FakeIO): { keys: string }[] {
  return io.socket.sent
    .map((raw) => JSON.parse(raw))
    .filter((m) => m.type === "action");
}

describe("cockpit loop (S2)", () => {
  it("presses W then A and observes two stepped increments with retrieval updates", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    expect(cockpit.state.status).toBe("interactive");
    expect(JSON.parse(io.socket.sent[0])).toMatchObject({ type: "init", proto: PROTOCOL });

    cockpit.keydown("w");
    io.advance(COMBO_WINDOW_MS);
    expect(sentActions(io)).toEqual([{ type: "action", keys: "W" }].map((m) => expect.objectContaining(m)));
    expect(cockpit.state.queueDepth).toBe(1);
    serveStep(io, 1, 3, [], 2);
    expect(cockpit.state.step).toBe(1);
    expect(cockpit.state.queueDepth).toBe(0);
    expect(cockpit.state.cache.retrieved).toEqual([]);

    cockpit.keydown("a");
    io.advance(COMBO_WINDOW_MS);
    serveStep(io, 2, 3, [[0, 0.98], [2, 0.91], [1, 0.85]], 4);
    expect(cockpit.state.step).toBe(2);
    expect(cockpit.state.cache.retrieved).toEqual([[0, 0.98], [2, 0.91], [1, 0.85]]);
    expect(cockpit.state.cache.occupancy).toBe(4);

    expect(cockpit.state.protocolViolations).toBe(0);
    expect(cockpit.state.outOfOrderFrames).toBe(0);
    expect(cockpit.state.lastFrame).toMatchObject({ step: 2, k: 3 });
  });
});

describe("keyboard capture", () => {
  it("groups keys pressed within the combo window into one action", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    cockpit.keydown("w");
    io.advance(20);
    cockpit.keydown("a");
    io.advance(COMBO_WINDOW_MS);
    const actions = sentActions(io);
    expect(actions).toHaveLength(1);
    expect(actions[0].keys).toBe("WA");
  });

  it("sends separate actions outside the window", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    cockpit.keydown("w");
    io.advance(COMBO_WINDOW_MS);
    cockpit.keydown("d");
    io.advance(COMBO_WINDOW_MS);
    expect(sentActions(io).map((a) => a.keys)).toEqual(["W", "D"]);
  });

  it("ignores keys outside WASD and auto-repeats", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    cockpit.keydown("x");
    cockpit.keydown("Escape");
    cockpit.keydown("w", true); // auto-repeat
    io.advance(COMBO_WINDOW_MS * 2);
    expect(sentActions(io)).toHaveLength(0);
  });

  it("sends current parameter overrides with each action", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    cockpit.params.theta_deg = 45;
    cockpit.keydown("d");
    io.advance(COMBO_WINDOW_MS);
    expect(sentActions(io)[0]).toMatchObject({ keys: "D", theta_deg: 45 });
    expect(sentActions(io)[0]).not.toHaveProperty("eta");
  });
});

describe("stream handling", () => {
  it("keeps the highest (step, k) frame and drops out-of-order frames", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    const h = io.socket.handlers;
    const frame = (step: number, k: number) => JSON.stringify({
      type: "frame", step, k, png_b64: `f${step}.${k}`, pose: IDENTITY_POSE,
    });
    h.onMessage(frame(1, 1));
    h.onMessage(frame(1, 2));
    h.onMessage(frame(1, 1)); // stale: dropped
    expect(cockpit.state.lastFrame).toMatchObject({ step: 1, k: 2 });
    expect(cockpit.state.outOfOrderFrames).toBe(1);
    h.onMessage(frame(2, 1)); // next step outranks higher k of older step
    expect(cockpit.state.lastFrame).toMatchObject({ step: 2, k: 1 });
  });

  it("never decreases the displayed step", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    serveStep(io, 1);
    serveStep(io, 2);
    io.socket.handlers.onMessage(JSON.stringify(
      { type: "stepped", step: 0, occupancy: 0, evictions: [] })); // session reset
    expect(cockpit.state.step).toBe(2);
  });

  it("counts protocol violations without corrupting state", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    io.socket.handlers.onMessage("not json");
    io.socket.handlers.onMessage(JSON.stringify({ type: "frame", step: 1 })); // missing fields
    io.socket.handlers.onMessage(JSON.stringify({ type: "warp", to: "mars" }));
    expect(cockpit.state.protocolViolations).toBe(3);
    expect(cockpit.state.status).toBe("interactive");
    expect(cockpit.state.lastFrame).toBeNull();
  });

  it("reports pose position and yaw from the frame pose", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    const yaw30 = {
      R: [Math.cos(Math.PI / 6), 0, Math.sin(Math.PI / 6),
          0, 1, 0,
          -Math.sin(Math.PI / 6), 0, Math.cos(Math.PI / 6)],
      t: [1, 2, 3],
    };
    io.socket.handlers.onMessage(JSON.stringify(
      { type: "frame", step: 1, k: 1, png_b64: "x", pose: yaw30 }));
    expect(cockpit.state.pose?.position).toEqual([1, 2, 3]);
    expect(cockpit.state.pose?.yawDeg).toBeCloseTo(30, 6);
  });

  it("counts decode failures reported by the view", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    cockpit.noteDecodeFailure();
    expect(cockpit.state.droppedFrames).toBe(1);
  });
});

describe("connection lifecycle", () => {
  it("shows an error banner on protocol mismatch", () => {
    const io = new FakeIO();
    const cockpit = new Cockpit(io);
    cockpit.connect();
    io.socket.handlers.onOpen();
    io.socket.handlers.onMessage(JSON.stringify(
      { type: "error", code: "bad_protocol", message: "expected worldwalk/1" }));
    expect(cockpit.state.status).toBe("error");
    expect(cockpit.state.statusDetail).toContain("worldwalk/1");
  });

  it("marks the view disconnected when the socket drops and supports retry", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    io.socket.close();
    expect(cockpit.state.status).toBe("disconnected");
    cockpit.retry();
    io.socket.handlers.onOpen();
    io.socket.handlers.onMessage(readyMessage());
    expect(cockpit.state.status).toBe("interactive");
    expect(io.sockets).toHaveLength(2);
  });

  it("queues actions while offline and flushes them on reconnect", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    io.socket.close();
    cockpit.keydown("w");
    io.advance(COMBO_WINDOW_MS);
    expect(cockpit.state.pendingOffline).toBe(1);

    cockpit.retry();
    io.advance(1000); // well under the discard deadline
    io.socket.handlers.onOpen();
    io.socket.handlers.onMessage(readyMessage());
    expect(cockpit.state.pendingOffline).toBe(0);
    expect(sentActions(io).map((a) => a.keys)).toEqual(["W"]);
  });

  it("discards offline actions after 5 s with a notice", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    io.socket.close();
    cockpit.keydown("s");
    io.advance(COMBO_WINDOW_MS);
    expect(cockpit.state.pendingOffline).toBe(1);
    io.advance(OFFLINE_DISCARD_MS);
    expect(cockpit.state.pendingOffline).toBe(0);
    expect(cockpit.state.notices.some((n) => n.includes("discarded"))).toBe(true);
  });

  it("server step errors decrement the queue and surface a notice", () => {
    const io = new FakeIO();
    const cockpit = connectReady(io);
    cockpit.keydown("w");
    io.advance(COMBO_WINDOW_MS);
    expect(cockpit.state.queueDepth).toBe(1);
    io.socket.handlers.onMessage(JSON.stringify(
      { type: "error", code: "step_failed", message: "generator exploded" }));
    expect(cockpit.state.queueDepth).toBe(0);
    expect(cockpit.state.notices.some((n) => n.includes("step_failed"))).toBe(true);
  });
});

describe("protocol helpers", () => {
  it("rejects malformed messages", () => {
    expect(parseServerMessage("{}")).toBeNull();
    expect(parseServerMessage("[1,2]")).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "retrieval", step: 1, entries: [[1]] })))
      .toBeNull();
  });

  it("computes the identity yaw as zero", () => {
    expect(poseReadout(IDENTITY_POSE).yawDeg).toBeCloseTo(0, 9);
  });
});
