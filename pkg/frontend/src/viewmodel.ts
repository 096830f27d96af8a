// Render-side state: the latest snapshot, connection health, and derived
// per-pair bound proximity.  Frames render only from the latest snapshot; if
// none arrived for a second the view is stale and says so instead of
// interpolating fiction.

import { ObstacleSet, StateSnapshot, parseSnapshot } from "./protocol.js";

export const STALE_AFTER_MS = 1000;
export const HIGHLIGHT_RATIO = 1.1;

export interface PairProximity {
  i: number;
  j: number;
  ratio: number; // dist / bound; <= 1.1 draws the warning highlight
  highlight: boolean;
}

export type ConnectionState = "connecting" | "connected" | "disconnected";

export class ViewModel {
  latest: StateSnapshot | null = null;
  obstacles: ObstacleSet | null = null;
  connection: ConnectionState = "connecting";
  lastSnapshotMs = -Infinity;
  parseErrors = 0;

  ingest(text: string, nowMs: number): boolean {
    const snap = parseSnapshot(text);
    if (snap === null) {
      this.parseErrors += 1;
      return false;
    }
    this.latest = snap;
    this.lastSnapshotMs = nowMs;
    if (snap.obstacles) {
      this.obstacles = snap.obstacles;
    }
    return true;
  }

  isStale(nowMs: number): boolean {
    return nowMs - this.lastSnapshotMs > STALE_AFTER_MS;
  }

  pairProximity(): PairProximity[] {
    if (!this.latest) return [];
    return this.latest.pairs.map((p) => {
      const ratio = p.bound > 0 ? p.dist / p.bound : Infinity;
      return { i: p.i, j: p.j, ratio, highlight: ratio <= HIGHLIGHT_RATIO };
    });
  }

  centroid(): [number, number] | null {
    if (!this.latest || this.latest.robots.length === 0) return null;
    let x = 0;
    let y = 0;
    for (const r of this.latest.robots) {
      x += r.pos[0];
      y += r.pos[1];
    }
    const n = this.latest.robots.length;
    return [x / n, y / n];
  }
}
