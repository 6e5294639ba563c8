import assert from "node:assert/strict";
import { test } from "node:test";

import { interpolateFrames, rateImage, simulateBand, type LuminanceSeq } from "../src/simulate";

function constant(value: number, t: number): LuminanceSeq {
  return { frames: new Float64Array(t).fill(value), t, h: 1, w: 1, dt: 1.0 };
}

test("threshold reached every step", () => {
  const bits = simulateBand(constant(0.4, 5), 0.4, 0, 1);
  assert.deepEqual(Array.from(bits), [1, 1, 1, 1, 1]);
});

test("zero luminance never fires", () => {
  const bits = simulateBand(constant(0, 7), 0.4, 0, 1);
  assert.equal(bits.reduce((a, b) => a + b, 0), 0);
});

test("half threshold fires every other step", () => {
  const bits = simulateBand(constant(0.2, 6), 0.4, 0, 1);
  assert.deepEqual(Array.from(bits), [0, 1, 0, 1, 0, 1]);
});

test("carry keeps the overshoot, hard reset discards it", () => {
  const carry = simulateBand(constant(0.45, 9), 1.0, 0, 1, "carry");
  const hard = simulateBand(constant(0.45, 9), 1.0, 0, 1, "hard");
  assert.equal(carry.reduce((a, b) => a + b, 0), 4); // floor(9 * 0.45)
  assert.equal(hard.reduce((a, b) => a + b, 0), 3);
});

test("interpolation hits the affine values and preserves endpoints", () => {
  const lum: LuminanceSeq = { frames: new Float64Array([0, 4]), t: 2, h: 1, w: 1, dt: 1.0 };
  const dense = interpolateFrames(lum, 4);
  assert.deepEqual(Array.from(dense.frames), [0, 1, 2, 3, 4]);
  assert.equal(dense.dt, 0.25);
});

test("band split equals whole-image simulation", () => {
  const t = 6;
  const h = 8;
  const w = 5;
  const frames = new Float64Array(t * h * w);
  let state = 99;
  for (let i = 0; i < frames.length; i++) {
    state = (state * 1664525 + 1013904223) >>> 0;
    frames[i] = state / 0xffffffff;
  }
  const lum: LuminanceSeq = { frames, t, h, w, dt: 0.25 };
  const whole = simulateBand(lum, 0.3, 0, h);
  // rebuild from two bands
  const partA = simulateBand(lum, 0.3, 0, 3);
  const partB = simulateBand(lum, 0.3, 3, h);
  for (let ti = 0; ti < t; ti++) {
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w; x++) {
        const fromWhole = whole[(ti * h + y) * w + x];
        const fromBands =
          y < 3 ? partA[(ti * 3 + y) * w + x] : partB[(ti * 5 + (y - 3)) * w + x];
        assert.equal(fromWhole, fromBands);
      }
    }
  }
});

test("rate image rounds half up", () => {
  // one spike in two steps: 0.5 * 255 = 127.5 -> 128
  const bits = new Uint8Array([1, 0]);
  assert.equal(rateImage(bits, 2, 1, 1)[0], 128);
  assert.equal(rateImage(new Uint8Array([1, 1]), 2, 1, 1)[0], 255);
  assert.equal(rateImage(new Uint8Array([0, 0]), 2, 1, 1)[0], 0);
});
