// Canvas drawing.  The math helpers (covariance ellipse, world-to-screen)
// are pure and unit-tested; the draw calls themselves are thin.

import { RobotState, StateSnapshot } from "./protocol.js";
import { PairProximity } from "./viewmodel.js";

export interface Ellipse {
  rx: number;     // semi-axis along the major eigenvector
  ry: number;
  angle: number;  // radians, major-axis direction
}

/** 3-sigma (by default) ellipse of a 2x2 covariance given as [sxx, sxy, syy]. */
export function covarianceEllipse(
  cov: readonly [number, number, number],
  k = 3,
): Ellipse {
  const [a, b, c] = cov;
  const mean = 0.5 * (a + c);
  const radius = Math.hypot(0.5 * (a - c), b);
  const l1 = Math.max(mean + radius, 0);
  const l2 = Math.max(mean - radius, 0);
  const angle = 0.5 * Math.atan2(2 * b, a - c);
  return { rx: k * Math.sqrt(l1), ry: k * Math.sqrt(l2), angle };
}

export interface Viewport {
  centerWorld: [number, number]; // kept on the formation centroid
  metersPerPixel: number;
  width: number;
  height: number;
}

export function worldToScreen(
  p: readonly [number, number],
  view: Viewport,
): [number, number] {
  const sx = view.width / 2 + (p[0] - view.centerWorld[0]) / view.metersPerPixel;
  const sy = view.height / 2 - (p[1] - view.centerWorld[1]) / view.metersPerPixel;
  return [sx, sy];
}

export interface SceneInput {
  snapshot: StateSnapshot;
  obstacles: { circles: [number, number, number][]; segments: [[number, number], [number, number]][] } | null;
  proximity: PairProximity[];
  stale: boolean;
}

export function drawScene(ctx: CanvasRenderingContext2D, scene: SceneInput, view: Viewport): void {
  ctx.clearRect(0, 0, view.width, view.height);
  const px = (m: number) => m / view.metersPerPixel;

  if (scene.obstacles) {
    ctx.strokeStyle = "#555";
    ctx.fillStyle = "#55555540";
    ctx.lineWidth = 2;
    for (const [x, y, r] of scene.obstacles.circles) {
      const [cx, cy] = worldToScreen([x, y], view);
      ctx.beginPath();
      ctx.arc(cx, cy, px(r), 0, 2 * Math.PI);
      ctx.fill();
      ctx.stroke();
    }
    for (const [p, q] of scene.obstacles.segments) {
      const [x1, y1] = worldToScreen(p, view);
      const [x2, y2] = worldToScreen(q, view);
      ctx.beginPath();
      ctx.moveTo(x1, y1);
      ctx.lineTo(x2, y2);
      ctx.stroke();
    }
  }

  const byId = new Map<number, RobotState>();
  for (const r of scene.snapshot.robots) byId.set(r.id, r);

  // pair links, highlighted when close to the distance bound
  for (const pair of scene.proximity) {
    const a = byId.get(pair.i);
    const b = byId.get(pair.j);
    if (!a || !b) continue;
    const [x1, y1] = worldToScreen(a.pos, view);
    const [x2, y2] = worldToScreen(b.pos, view);
    ctx.strokeStyle = pair.highlight ? "#de2222" : "#2a6f2a55";
    ctx.lineWidth = pair.highlight ? 2.5 : 1;
    ctx.beginPath();
    ctx.moveTo(x1, y1);
    ctx.lineTo(x2, y2);
    ctx.stroke();
  }

  for (const r of scene.snapshot.robots) {
    const [cx, cy] = worldToScreen(r.pos, view);
    // 3-sigma belief ellipse
    const ell = covarianceEllipse(r.cov);
    if (ell.rx > 0) {
      ctx.strokeStyle = "#4477cc88";
      ctx.lineWidth = 1;
      ctx.beginPath();
      ctx.ellipse(cx, cy, px(ell.rx), Math.max(px(ell.ry), 0.5), -ell.angle, 0, 2 * Math.PI);
      ctx.stroke();
    }
    // body
    ctx.fillStyle = "#2a6f2a";
    ctx.beginPath();
    ctx.arc(cx, cy, Math.max(px(r.radius), 2), 0, 2 * Math.PI);
    ctx.fill();
    // reference cross
    const [rx, ry] = worldToScreen(r.ref, view);
    ctx.strokeStyle = "#cc8800";
    ctx.beginPath();
    ctx.moveTo(rx - 4, ry);
    ctx.lineTo(rx + 4, ry);
    ctx.moveTo(rx, ry - 4);
    ctx.lineTo(rx, ry + 4);
    ctx.stroke();
    ctx.fillStyle = "#222";
    ctx.font = "11px sans-serif";
    ctx.fillText(String(r.id), cx + 6, cy - 6);
  }

  if (scene.stale) {
    ctx.fillStyle = "#aa2222";
    ctx.font = "bold 16px sans-serif";
    ctx.fillText("STALE DATA", 12, 24);
  }
}
