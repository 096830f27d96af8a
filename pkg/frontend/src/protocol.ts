// Wire protocol shared with the teleoperation service (schema v1): one JSON
// document per websocket text frame.  Commands carry the 5-axis formation
// rate (rotation, s_x, s_y, t_x, t_y); state frames carry robots, pairs and
// (on the first frame of a connection) the obstacle map.

export const PROTOCOL_VERSION = 1;

// Per-axis operator rate limits, mirroring the service: rotation rad/s,
// scale 1/s, translation m/s.
export const RATE_LIMITS = [0.5, 0.5, 0.5, 1.0, 1.0] as const;

export type CommandVector = [number, number, number, number, number];

export interface CommandMessage {
  v: number;
  type: "cmd";
  deta: CommandVector;
  stamp: number;
}

export interface RobotState {
  id: number;
  pos: [number, number];
  ref: [number, number];
  belief: [number, number];
  cov: [number, number, number]; // s_xx, s_xy, s_yy
  radius: number;
}

export interface PairState {
  i: number;
  j: number;
  dist: number;
  bound: number;
  active: boolean;
}

export interface ObstacleSet {
  circles: [number, number, number][]; // x, y, radius
  segments: [[number, number], [number, number]][];
}

export interface StateSnapshot {
  v: number;
  type: "state";
  tick: number;
  robots: RobotState[];
  pairs: PairState[];
  obstacles?: ObstacleSet;
}

export function clampCommand(deta: readonly number[]): CommandVector {
  const out: number[] = [];
  for (let k = 0; k < 5; k++) {
    const limit = RATE_LIMITS[k];
    const v = deta[k] ?? 0;
    out.push(Math.min(limit, Math.max(-limit, v)));
  }
  return out as CommandVector;
}

export function encodeCommand(deta: readonly number[], stamp: number): string {
  const msg: CommandMessage = {
    v: PROTOCOL_VERSION,
    type: "cmd",
    deta: clampCommand(deta),
    stamp,
  };
  return JSON.stringify(msg);
}

export function parseSnapshot(text: string): StateSnapshot | null {
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch {
    return null;
  }
  const snap = data as StateSnapshot;
  if (
    typeof snap !== "object" || snap === null ||
    snap.v !== PROTOCOL_VERSION || snap.type !== "state" ||
    typeof snap.tick !== "number" || !Array.isArray(snap.robots) ||
    !Array.isArray(snap.pairs)
  ) {
    return null;
  }
  for (const r of snap.robots) {
    if (
      typeof r.id !== "number" || !Array.isArray(r.pos) || r.pos.length !== 2 ||
      !Array.isArray(r.cov) || r.cov.length !== 3 || typeof r.radius !== "number"
    ) {
      return null;
    }
  }
  return snap;
}
