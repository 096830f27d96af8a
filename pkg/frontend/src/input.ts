// Keyboard command source.  WASD steers translation, QE rotation, ZX/CV the
// two scale axes.  While any mapped key is held the loop emits a command
// every frame (20 Hz); releasing everything emits a single zero command so
// the service sees an explicit stop before its own staleness timeout.

import { CommandVector } from "./protocol.js";

export const FRAME_INTERVAL_MS = 50; // 20 Hz, comfortably under the 25 Hz cap

// key -> [command axis, rate].  Must match shared/keymap.json, which the
// scripted conformance client also consumes.
export const KEYMAP: Readonly<Record<string, readonly [number, number]>> = {
  w: [4, 0.5],
  s: [4, -0.5],
  a: [3, -0.5],
  d: [3, 0.5],
  q: [0, 0.25],
  e: [0, -0.25],
  z: [1, -0.25],
  x: [1, 0.25],
  c: [2, -0.25],
  v: [2, 0.25],
};

export function commandFromKeys(keys: ReadonlySet<string>): CommandVector {
  const deta: CommandVector = [0, 0, 0, 0, 0];
  for (const key of keys) {
    const entry = KEYMAP[key];
    if (entry) {
      deta[entry[0]] += entry[1];
    }
  }
  return deta;
}

export function anyMapped(keys: ReadonlySet<string>): boolean {
  for (const key of keys) {
    if (KEYMAP[key]) return true;
  }
  return false;
}

export interface CommandLoopState {
  wasActive: boolean;
}

export function initialLoopState(): CommandLoopState {
  return { wasActive: false };
}

/**
 * One 20 Hz frame of the command loop: returns the command to emit this
 * frame (null for silence) and the updated loop state.
 */
export function stepCommandLoop(
  state: CommandLoopState,
  keys: ReadonlySet<string>,
): { emit: CommandVector | null; state: CommandLoopState } {
  if (anyMapped(keys)) {
    return { emit: commandFromKeys(keys), state: { wasActive: true } };
  }
  if (state.wasActive) {
    return { emit: [0, 0, 0, 0, 0], state: { wasActive: false } };
  }
  return { emit: null, state };
}
