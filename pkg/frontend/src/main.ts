/** Browser wiring: real WebSocket, real timers, keyboard capture, and the
 * parameter controls. The engine server owns all world state; reloading the
 * page just reconnects and resumes display at the server's next step. */

import { Cockpit, CockpitIO, SocketHandlers, SocketLike } from "./cockpit.js";
import { CanvasView, renderHud } from "./view.js";

function socketUrl(): string {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  const host = location.host || "127.0.0.1:8765";
  return `${scheme}://${host}/session`;
}

const io: CockpitIO = {
  openSocket(handlers: SocketHandlers): SocketLike {
    const ws = new WebSocket(socketUrl());
    ws.onopen = () => handlers.onOpen();
    ws.onmessage = (ev) => handlers.onMessage(String(ev.data));
    ws.onclose = () => handlers.onClose();
    return {
      send: (data) => ws.send(data),
      close: () => ws.close(),
    };
  },
  now: () => performance.now(),
  setTimer: (fn, ms) => window.setTimeout(fn, ms),
  clearTimer: (id) => window.clearTimeout(id),
  log: (message) => console.log(`[cockpit] ${message}`),
};

const cockpit = new Cockpit(io);
const hud = document.getElementById("hud")!;
const canvas = document.getElementById("viewport") as HTMLCanvasElement;
const view = new CanvasView(canvas, cockpit);

cockpit.onChange(() => renderHud(hud, cockpit));

document.addEventListener("keydown", (ev) => {
  if (ev.target instanceof HTMLInputElement) return; // typing in a control
  cockpit.keydown(ev.key, ev.repeat);
});

function bindNumber(id: string, apply: (v: number | undefined) => void): void {
  const input = document.getElementById(id) as HTMLInputElement;
  input.addEventListener("change", () => {
    const v = input.value.trim() === "" ? undefined : Number(input.value);
    apply(v !== undefined && Number.isFinite(v) ? v : undefined);
  });
}

bindNumber("param-eta", (v) => (cockpit.params.eta = v));
bindNumber("param-theta", (v) => (cockpit.params.theta_deg = v));
bindNumber("param-frames", (v) => (cockpit.params.frames = v));
bindNumber("param-cadence", (v) => (view.cadenceMs = v ?? 0));

document.getElementById("retry")!.addEventListener("click", () => cockpit.retry());
document.getElementById("reset")!.addEventListener("click", () => cockpit.reset());

cockpit.connect();
