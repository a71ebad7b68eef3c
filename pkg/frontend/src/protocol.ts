/** The worldwalk/1 wire protocol: message shapes and strict validation.
 *
 * The cockpit treats anything that fails validation as a protocol violation
 * and drops it, so a buggy server can never corrupt the UI state.
 */

export const PROTOCOL = "worldwalk/1";

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export interface WirePose {
  R: number[]; // 9 numbers, row-major camera-to-world rotation
  t: number[]; // 3 numbers, camera center
}

export interface ReadyMsg {
  type: "ready";
  proto: string;
  session: string;
  intrinsics: Intrinsics;
  frames: number;
}

export interface FrameMsg {
  type: "frame";
  step: number;
  k: number;
  png_b64: string;
  pose: WirePose;
}

export interface RetrievalMsg {
  type: "retrieval";
  step: number;
  entries: [number, number][]; // [cache index, similarity score]
}

export interface SteppedMsg {
  type: "stepped";
  step: number;
  occupancy: number;
  evictions: number[];
}

export interface ErrorMsg {
  type: "error";
  code: string;
  message: string;
}

export type ServerMessage = ReadyMsg | FrameMsg | RetrievalMsg | SteppedMsg | ErrorMsg;

export interface ActionParams {
  eta?: number;
  theta_deg?: number;
  frames?: number;
}

const isNum = (v: unknown): v is number => typeof v === "number" && Number.isFinite(v);
const isStr = (v: unknown): v is string => typeof v === "string";

function isIntrinsics(v: unknown): v is Intrinsics {
  if (typeof v !== "object" || v === null) return false;
  const o = v as Record<string, unknown>;
  return ["fx", "fy", "cx", "cy", "width", "height"].every((k) => isNum(o[k]));
}

function isPose(v: unknown): v is WirePose {
  if (typeof v !== "object" || v === null) return false;
  const o = v as Record<string, unknown>;
  return Array.isArray(o.R) && o.R.length === 9 && o.R.every(isNum)
    && Array.isArray(o.t) && o.t.length === 3 && o.t.every(isNum);
}

/** Parse and validate one server message; null means protocol violation. */
export function parseServerMessage(raw: string): ServerMessage | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const o = msg as Record<string, unknown>;
  switch (o.type) {
    case "ready":
      return isStr(o.proto) && isStr(o.session) && isIntrinsics(o.intrinsics) && isNum(o.frames)
        ? (o as unknown as ReadyMsg) : null;
    case "frame":
      return isNum(o.step) && isNum(o.k) && isStr(o.png_b64) && isPose(o.pose)
        ? (o as unknown as FrameMsg) : null;
    case "retrieval":
      return isNum(o.step) && Array.isArray(o.entries)
        && o.entries.every((e) => Array.isArray(e) && e.length === 2 && e.every(isNum))
        ? (o as unknown as RetrievalMsg) : null;
    case "stepped":
      return isNum(o.step) && isNum(o.occupancy) && Array.isArray(o.evictions)
        && o.evictions.every(isNum)
        ? (o as unknown as SteppedMsg) : null;
    case "error":
      return isStr(o.code) && isStr(o.message) ? (o as unknown as ErrorMsg) : null;
    default:
      return null;
  }
}

/** Position and yaw (rotation about +y, degrees) from a wire pose. The
 * camera forward axis is -R[:,2]; yaw 0 faces -z, positive turns left. */
export function poseReadout(pose: WirePose): { position: [number, number, number]; yawDeg: number } {
  const fx = -pose.R[2];
  const fz = -pose.R[8];
  return {
    position: [pose.t[0], pose.t[1], pose.t[2]],
    yawDeg: (Math.atan2(-fx, -fz) * 180) / Math.PI,
  };
}
