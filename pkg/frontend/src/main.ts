// Operator console wiring: keyboard -> 20 Hz command stream, websocket ->
// view model, view model -> canvas on animation frames.

import { TeleopClient } from "./client.js";
import { FRAME_INTERVAL_MS, initialLoopState, stepCommandLoop } from "./input.js";
import { encodeCommand } from "./protocol.js";
import { Viewport, drawScene } from "./render.js";
import { ViewModel } from "./viewmodel.js";

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusEl = document.getElementById("status")!;
const reconnectBtn = document.getElementById("reconnect") as HTMLButtonElement;
const zoomInput = document.getElementById("zoom") as HTMLInputElement;

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const vm = new ViewModel();
const client = new TeleopClient(wsUrl, vm);
client.connect();
reconnectBtn.onclick = () => client.connect();

const keys = new Set<string>();
document.addEventListener("keydown", (e) => keys.add(e.key.toLowerCase()));
document.addEventListener("keyup", (e) => keys.delete(e.key.toLowerCase()));
window.addEventListener("blur", () => keys.clear());

let loopState = initialLoopState();
setInterval(() => {
  const step = stepCommandLoop(loopState, keys);
  loopState = step.state;
  if (step.emit !== null) {
    client.send(encodeCommand(step.emit, Date.now()));
  }
}, FRAME_INTERVAL_MS);

function viewport(): Viewport {
  const centroid = vm.centroid() ?? [0, 0];
  return {
    centerWorld: centroid as [number, number],
    metersPerPixel: 1 / Number(zoomInput.value || "60"),
    width: canvas.width,
    height: canvas.height,
  };
}

function frame() {
  const now = performance.now();
  statusEl.textContent =
    `${vm.connection} | tick ${vm.latest?.tick ?? "-"} | ` +
    `errors ${vm.parseErrors}` + (vm.isStale(now) ? " | STALE" : "");
  if (vm.latest) {
    drawScene(ctx, {
      snapshot: vm.latest,
      obstacles: vm.obstacles,
      proximity: vm.pairProximity(),
      stale: vm.isStale(now),
    }, viewport());
  }
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
