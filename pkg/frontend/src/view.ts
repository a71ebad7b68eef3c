/** DOM bindings: paints streamed frames onto the canvas and mirrors the
 * cockpit state into the HUD. Painting honors a display cadence control;
 * the default paints every frame as it arrives. */

import { Cockpit } from "./cockpit.js";
import { FrameMsg } from "./protocol.js";

export class CanvasView {
  private canvas: HTMLCanvasElement;
  private ctx: CanvasRenderingContext2D;
  private cockpit: Cockpit;
  private lastPaintedKey = "";
  private lastPaintAt = 0;
  private painting = false;
  cadenceMs = 0; // 0 = as fast as received

  constructor(canvas: HTMLCanvasElement, cockpit: Cockpit) {
    this.canvas = canvas;
    const ctx = canvas.getContext("2d");
    if (ctx === null) throw new Error("no 2d canvas context");
    this.ctx = ctx;
    this.cockpit = cockpit;
    cockpit.onChange(() => void this.maybePaint());
  }

  private async maybePaint(): Promise<void> {
    const frame = this.cockpit.state.lastFrame;
    if (frame === null || this.painting) return;
    const key = `${frame.step}/${frame.k}`;
    if (key === this.lastPaintedKey) return;
    const now = performance.now();
    if (this.cadenceMs > 0 && now - this.lastPaintAt < this.cadenceMs) return;
    this.painting = true;
    try {
      await this.paint(frame);
      this.lastPaintedKey = key;
      this.lastPaintAt = now;
    } catch {
      this.cockpit.noteDecodeFailure();
    } finally {
      this.painting = false;
      // catch up if a newer frame arrived while decoding
      if (this.cockpit.state.lastFrame !== frame) void this.maybePaint();
    }
  }

  private async paint(frame: FrameMsg): Promise<void> {
    const img = new Image();
    img.src = "data:image/png;base64," + frame.png_b64;
    await img.decode();
    if (this.canvas.width !== img.width || this.canvas.height !== img.height) {
      this.canvas.width = img.width;
      this.canvas.height = img.height;
    }
    this.ctx.drawImage(img, 0, 0);
  }
}

function fmt(v: number, digits = 2): string {
  return v.toFixed(digits);
}

export function renderHud(root: HTMLElement, cockpit: Cockpit): void {
  const s = cockpit.state;
  const set = (id: string, text: string) => {
    const el = root.querySelector(`#${id}`);
    if (el !== null) el.textContent = text;
  };
  set("status", s.status + (s.statusDetail ? ` (${s.statusDetail})` : ""));
  set("step", String(s.step));
  set("frame-id", s.lastFrame ? `step ${s.lastFrame.step}, k ${s.lastFrame.k}` : "-");
  if (s.pose) {
    const [x, y, z] = s.pose.position;
    set("pose", `x ${fmt(x)}  y ${fmt(y)}  z ${fmt(z)}  yaw ${fmt(s.pose.yawDeg, 1)}°`);
  } else {
    set("pose", "-");
  }
  set("occupancy", String(s.cache.occupancy));
  set("queue", String(s.queueDepth) + (s.pendingOffline ? ` (+${s.pendingOffline} offline)` : ""));
  set("dropped", `${s.droppedFrames} decode, ${s.outOfOrderFrames} out-of-order, `
    + `${s.protocolViolations} protocol`);
  const retrieval = root.querySelector("#retrieval");
  if (retrieval !== null) {
    retrieval.innerHTML = "";
    if (s.cache.retrieved.length === 0) {
      retrieval.textContent = "(no history used)";
    }
    for (const [index, score] of s.cache.retrieved) {
      const li = document.createElement("li");
      li.textContent = `cache[${index}] · ${score.toFixed(4)}`;
      li.className = "retrieved";
      retrieval.appendChild(li);
    }
  }
  const notices = root.querySelector("#notices");
  if (notices !== null) {
    notices.textContent = s.notices.slice(-3).join("\n");
  }
  const retryButton = root.querySelector<HTMLButtonElement>("#retry");
  if (retryButton !== null) {
    retryButton.style.display =
      s.status === "disconnected" || s.status === "error" ? "inline-block" : "none";
  }
}
