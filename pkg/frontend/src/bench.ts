/** Throughput harness (informational, not an acceptance gate). */

import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { encodeJob } from "./encode";

async function main(): Promise<void> {
  const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "spkc-bench-"));
  const t = 64;
  const h = 256;
  const w = 256;
  // deterministic pseudo-random luminance, no dependency on any RNG library
  const frames = new Float32Array(t * h * w);
  let state = 0x12345678;
  for (let i = 0; i < frames.length; i++) {
    state = (state * 1664525 + 1013904223) >>> 0;
    frames[i] = state / 0xffffffff;
  }
  const lumPath = path.join(tmp, "bench.lum");
  const headerBuf = Buffer.alloc(12);
  headerBuf.writeUInt32LE(t, 0);
  headerBuf.writeUInt32LE(h, 4);
  headerBuf.writeUInt32LE(w, 8);
  fs.writeFileSync(lumPath, Buffer.concat([headerBuf, Buffer.from(frames.buffer)]));

  const mpix = (t * h * w) / 1e6;
  for (const threads of [1, 2, 4, 8]) {
    const out = path.join(tmp, `bench-${threads}.spk`);
    const t0 = process.hrtime.bigint();
    await encodeJob({
      input: lumPath,
      output: out,
      theta: 0.05,
      interp: 2,
      threads,
      freq: 1280.0,
      reset: "carry",
    });
    const seconds = Number(process.hrtime.bigint() - t0) / 1e9;
    console.log(
      `threads=${threads}: ${seconds.toFixed(2)}s for ${mpix.toFixed(1)} Mpixel input ` +
        `(${(mpix / seconds).toFixed(1)} Mpixel/s)`,
    );
  }
  fs.rmSync(tmp, { recursive: true, force: true });
}

main();
