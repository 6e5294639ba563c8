/**
 * Integrate-and-fire simulation and temporal interpolation.
 *
 * Arithmetic mirrors the reference implementation operation for operation
 * (f64 everywhere, same evaluation order), so outputs are byte-identical.
 */

export type ResetMode = "carry" | "hard";

export interface LuminanceSeq {
  frames: Float64Array; // t-major then row-major, length t*h*w
  t: number;
  h: number;
  w: number;
  dt: number;
}

/** Linear temporal upsampling: (t-1)*factor + 1 frames, endpoints preserved. */
export function interpolateFrames(lum: LuminanceSeq, factor: number): LuminanceSeq {
  if (!Number.isInteger(factor) || factor < 1) {
    throw new RangeError(`factor must be an integer >= 1, got ${factor}`);
  }
  if (factor === 1 || lum.t === 1) {
    return { ...lum, frames: lum.frames.slice(), dt: lum.dt / factor };
  }
  const { t, h, w } = lum;
  const plane = h * w;
  const tOut = (t - 1) * factor + 1;
  const out = new Float64Array(tOut * plane);
  for (let i = 0; i < t; i++) {
    out.set(lum.frames.subarray(i * plane, (i + 1) * plane), i * factor * plane);
  }
  for (let r = 1; r < factor; r++) {
    const wgt = r / factor;
    for (let i = 0; i < t - 1; i++) {
      const a = i * plane;
      const b = (i + 1) * plane;
      const o = (i * factor + r) * plane;
      for (let p = 0; p < plane; p++) {
        const av = lum.frames[a + p];
        out[o + p] = av + (lum.frames[b + p] - av) * wgt;
      }
    }
  }
  return { frames: out, t: tOut, h, w, dt: lum.dt / factor };
}

/**
 * Simulate a band of rows [rowStart, rowEnd).  Returns the band's bits in
 * t-major then row-major order (length t * bandRows * w).
 */
export function simulateBand(
  lum: LuminanceSeq,
  theta: number,
  rowStart: number,
  rowEnd: number,
  reset: ResetMode = "carry",
): Uint8Array {
  if (!(theta > 0) || !Number.isFinite(theta)) {
    throw new RangeError(`theta must be a positive finite real, got ${theta}`);
  }
  const { t, h, w, dt } = lum;
  const bandRows = rowEnd - rowStart;
  const bandW = bandRows * w;
  const acc = new Float64Array(bandW);
  const bits = new Uint8Array(t * bandW);
  for (let ti = 0; ti < t; ti++) {
    const frameOff = ti * h * w + rowStart * w;
    const outOff = ti * bandW;
    for (let p = 0; p < bandW; p++) {
      acc[p] = acc[p] + lum.frames[frameOff + p] * dt;
      if (acc[p] >= theta) {
        bits[outOff + p] = 1;
        acc[p] = reset === "carry" ? acc[p] - theta : 0.0;
      } else {
        bits[outOff + p] = 0;
      }
    }
  }
  return bits;
}

/** 8-bit firing-rate image: rate 1.0 maps to 255, round-half-up. */
export function rateImage(bits: Uint8Array, t: number, h: number, w: number): Uint8Array {
  const plane = h * w;
  const out = new Uint8Array(plane);
  for (let p = 0; p < plane; p++) {
    let count = 0;
    for (let ti = 0; ti < t; ti++) {
      count += bits[ti * plane + p];
    }
    const scaled = Math.floor((count / t) * 255.0 + 0.5);
    out[p] = scaled < 0 ? 0 : scaled > 255 ? 255 : scaled;
  }
  return out;
}
