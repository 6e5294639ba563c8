/** Binary PGM (P5) images and the raw .lum luminance container. */

import * as fs from "node:fs";
import * as path from "node:path";

import { FormatError } from "./format";
import type { LuminanceSeq } from "./simulate";

export function readPgm(file: string): { pixels: Uint8Array; h: number; w: number } {
  const raw = fs.readFileSync(file);
  const m = /^(P5)\s+(\d+)\s+(\d+)\s+(\d+)\s/.exec(raw.subarray(0, 64).toString("latin1"));
  if (!m || m[1] !== "P5") {
    throw new FormatError(`not a P5 file: ${file}`, 0);
  }
  const w = parseInt(m[2], 10);
  const h = parseInt(m[3], 10);
  const maxval = parseInt(m[4], 10);
  if (maxval !== 255) {
    throw new FormatError(`only maxval 255 supported, got ${maxval}`, m.index);
  }
  const data = raw.subarray(m[0].length);
  if (data.length !== w * h) {
    throw new FormatError(`pixel payload has ${data.length} bytes, expected ${w * h}`, m[0].length);
  }
  return { pixels: new Uint8Array(data), h, w };
}

export function writePgm(pixels: Uint8Array, h: number, w: number, file: string): void {
  const header = Buffer.from(`P5\n${w} ${h}\n255\n`, "ascii");
  fs.writeFileSync(file, Buffer.concat([header, Buffer.from(pixels)]));
}

export function readLum(file: string): LuminanceSeq {
  const raw = fs.readFileSync(file);
  if (raw.length < 12) {
    throw new FormatError("truncated luminance header", raw.length);
  }
  const t = raw.readUInt32LE(0);
  const h = raw.readUInt32LE(4);
  const w = raw.readUInt32LE(8);
  const need = t * h * w * 4;
  if (raw.length - 12 !== need) {
    throw new FormatError(`luminance payload has ${raw.length - 12} bytes, expected ${need}`, 12);
  }
  const frames = new Float64Array(t * h * w);
  for (let i = 0; i < frames.length; i++) {
    frames[i] = raw.readFloatLE(12 + i * 4); // f32 -> f64 is exact
  }
  return { frames, t, h, w, dt: 1.0 };
}

/** Load a luminance input: a .lum file, or a directory of .pgm frames (sorted by name). */
export function readLuminanceInput(input: string): LuminanceSeq {
  const stat = fs.statSync(input);
  if (stat.isFile()) {
    return readLum(input);
  }
  const names = fs
    .readdirSync(input)
    .filter((n) => n.endsWith(".pgm"))
    .sort();
  if (names.length === 0) {
    throw new Error(`no .pgm frames in ${input}`);
  }
  let h = -1;
  let w = -1;
  const planes: Uint8Array[] = [];
  for (const name of names) {
    const img = readPgm(path.join(input, name));
    if (h === -1) {
      h = img.h;
      w = img.w;
    } else if (img.h !== h || img.w !== w) {
      throw new Error(`frame ${name} is ${img.w}x${img.h}, expected ${w}x${h}`);
    }
    planes.push(img.pixels);
  }
  const frames = new Float64Array(names.length * h * w);
  for (let i = 0; i < planes.length; i++) {
    const off = i * h * w;
    for (let p = 0; p < h * w; p++) {
      frames[off + p] = planes[i][p] / 255.0;
    }
  }
  return { frames, t: names.length, h, w, dt: 1.0 };
}
