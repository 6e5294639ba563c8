/**
 * Encoding jobs: luminance input -> interpolation -> integrate-and-fire ->
 * packed .spk bytes.  Parallelism is by horizontal row bands; every band is
 * simulated and bit-packed independently and the packed lines are merged at
 * fixed offsets, so output bytes do not depend on the thread count.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { Worker } from "node:worker_threads";

import { HEADER_SIZE, SPK_MAGIC, SPK_VERSION, lineBytes, packLine, payloadBytes } from "./format";
import { readLuminanceInput } from "./pnm";
import { interpolateFrames, simulateBand, type LuminanceSeq, type ResetMode } from "./simulate";

export interface CodecJob {
  input: string;
  output: string;
  theta: number;
  interp: number;
  threads: number;
  freq: number; // luminance sampling rate in Hz (dt = 1/freq before interpolation)
  reset: ResetMode;
}

export interface BandTask {
  frames: Float64Array; // band rows of every raw luminance frame, t-major
  t: number;
  rows: number;
  w: number;
  dt: number;
  factor: number;
  theta: number;
  reset: ResetMode;
}

/** Interpolate, simulate, and pack one band; shared by the worker and the inline path. */
export function runBand(task: BandTask): Uint8Array {
  const band: LuminanceSeq = {
    frames: task.frames,
    t: task.t,
    h: task.rows,
    w: task.w,
    dt: task.dt,
  };
  const dense = interpolateFrames(band, task.factor);
  const bits = simulateBand(dense, task.theta, 0, task.rows, task.reset);
  const lb = lineBytes(task.w);
  const packed = new Uint8Array(dense.t * task.rows * lb);
  for (let ti = 0; ti < dense.t; ti++) {
    for (let y = 0; y < task.rows; y++) {
      packLine(bits, (ti * task.rows + y) * task.w, task.w, packed, (ti * task.rows + y) * lb);
    }
  }
  return packed;
}

function bandFrames(lum: LuminanceSeq, rowStart: number, rowEnd: number): Float64Array {
  const { t, h, w } = lum;
  const rows = rowEnd - rowStart;
  const out = new Float64Array(t * rows * w);
  for (let ti = 0; ti < t; ti++) {
    const src = ti * h * w + rowStart * w;
    out.set(lum.frames.subarray(src, src + rows * w), ti * rows * w);
  }
  return out;
}

function header(t: number, h: number, w: number, freq: number, theta: number): Buffer {
  const buf = Buffer.alloc(HEADER_SIZE);
  SPK_MAGIC.copy(buf, 0);
  buf.writeUInt16LE(SPK_VERSION, 4);
  buf.writeUInt32LE(h, 6);
  buf.writeUInt32LE(w, 10);
  buf.writeUInt32LE(t, 14);
  buf.writeDoubleLE(freq, 18);
  buf.writeDoubleLE(theta, 26);
  return buf;
}

function runBandInWorker(task: BandTask): Promise<Uint8Array> {
  return new Promise((resolve, reject) => {
    const worker = new Worker(path.join(__dirname, "worker.js"), {
      workerData: task,
      transferList: [task.frames.buffer as ArrayBuffer],
    });
    worker.once("message", (packed: Uint8Array) => resolve(packed));
    worker.once("error", reject);
  });
}

export async function encodeJob(job: CodecJob): Promise<{ t: number; h: number; w: number; spikes: number }> {
  if (!(job.theta > 0)) {
    throw new RangeError(`theta must be positive, got ${job.theta}`);
  }
  if (!Number.isInteger(job.interp) || job.interp < 1) {
    throw new RangeError(`interp must be an integer >= 1, got ${job.interp}`);
  }
  if (!Number.isInteger(job.threads) || job.threads < 1) {
    throw new RangeError(`threads must be an integer >= 1, got ${job.threads}`);
  }
  const lum = readLuminanceInput(job.input);
  lum.dt = 1.0 / job.freq;
  const tOut = lum.t === 1 ? 1 : (lum.t - 1) * job.interp + 1;
  const dtOut = lum.dt / job.interp;
  const freqOut = 1.0 / dtOut;
  const { h, w } = lum;
  const lb = lineBytes(w);
  const payload = Buffer.alloc(payloadBytes(tOut, h, w));

  const nBands = Math.min(job.threads, h);
  const rowsPerBand = Math.ceil(h / nBands);
  const bands: Array<{ rowStart: number; rows: number; task: BandTask }> = [];
  for (let rowStart = 0; rowStart < h; rowStart += rowsPerBand) {
    const rows = Math.min(rowsPerBand, h - rowStart);
    bands.push({
      rowStart,
      rows,
      task: {
        frames: bandFrames(lum, rowStart, rowStart + rows),
        t: lum.t,
        rows,
        w,
        dt: lum.dt,
        factor: job.interp,
        theta: job.theta,
        reset: job.reset,
      },
    });
  }

  const packs =
    nBands === 1
      ? [runBand(bands[0].task)]
      : await Promise.all(bands.map((b) => runBandInWorker(b.task)));

  // deterministic merge: each (t, row) line lands at its global offset
  for (let bi = 0; bi < bands.length; bi++) {
    const { rowStart, rows } = bands[bi];
    const packed = packs[bi];
    for (let ti = 0; ti < tOut; ti++) {
      for (let y = 0; y < rows; y++) {
        const src = (ti * rows + y) * lb;
        const dst = (ti * h + rowStart + y) * lb;
        payload.set(packed.subarray(src, src + lb), dst);
      }
    }
  }

  fs.writeFileSync(job.output, Buffer.concat([header(tOut, h, w, freqOut, job.theta), payload]));
  let spikes = 0;
  for (const packed of packs) {
    for (const byte of packed) {
      spikes += popcount8(byte);
    }
  }
  return { t: tOut, h, w, spikes };
}

function popcount8(b: number): number {
  b = b - ((b >> 1) & 0x55);
  b = (b & 0x33) + ((b >> 2) & 0x33);
  return (b + (b >> 4)) & 0x0f;
}
