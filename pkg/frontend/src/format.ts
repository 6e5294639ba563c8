/**
 * The .spk container (little-endian):
 *   magic "SPK1" | version u16 = 1 | H u32 | W u32 | T u32 | freq f64 | theta f64
 * followed by the payload: spikes in t-major then row-major order, packed
 * 8 per byte MSB-first, each (t, row) line padded to a whole byte.
 */

export const SPK_MAGIC = Buffer.from("SPK1", "ascii");
export const SPK_VERSION = 1;
export const HEADER_SIZE = 4 + 2 + 4 * 3 + 8 * 2; // 34

export class FormatError extends Error {
  readonly offset: number;
  constructor(message: string, offset: number) {
    super(`${message} (byte offset ${offset})`);
    this.offset = offset;
  }
}

export interface SpikeStream {
  bits: Uint8Array; // T*H*W values in {0,1}, t-major then row-major
  t: number;
  h: number;
  w: number;
  freq: number;
  theta: number;
}

export function lineBytes(w: number): number {
  return (w + 7) >> 3;
}

export function payloadBytes(t: number, h: number, w: number): number {
  return t * h * lineBytes(w);
}

/** Pack one line of w bits (already {0,1} bytes) MSB-first into out at offset. */
export function packLine(bits: Uint8Array, start: number, w: number, out: Uint8Array, outStart: number): void {
  let acc = 0;
  let nbits = 0;
  let o = outStart;
  for (let x = 0; x < w; x++) {
    acc = (acc << 1) | bits[start + x];
    nbits++;
    if (nbits === 8) {
      out[o++] = acc;
      acc = 0;
      nbits = 0;
    }
  }
  if (nbits > 0) {
    out[o] = acc << (8 - nbits); // pad the tail of the line with zeros
  }
}

export function encodeSpk(stream: SpikeStream): Buffer {
  const { t, h, w } = stream;
  const header = Buffer.alloc(HEADER_SIZE);
  SPK_MAGIC.copy(header, 0);
  header.writeUInt16LE(SPK_VERSION, 4);
  header.writeUInt32LE(h, 6);
  header.writeUInt32LE(w, 10);
  header.writeUInt32LE(t, 14);
  header.writeDoubleLE(stream.freq, 18);
  header.writeDoubleLE(stream.theta, 26);
  const payload = Buffer.alloc(payloadBytes(t, h, w));
  const lb = lineBytes(w);
  for (let ti = 0; ti < t; ti++) {
    for (let y = 0; y < h; y++) {
      packLine(stream.bits, (ti * h + y) * w, w, payload, (ti * h + y) * lb);
    }
  }
  return Buffer.concat([header, payload]);
}

export function decodeSpk(raw: Buffer): SpikeStream {
  if (raw.length < HEADER_SIZE) {
    throw new FormatError("truncated header", raw.length);
  }
  if (!raw.subarray(0, 4).equals(SPK_MAGIC)) {
    throw new FormatError(`bad magic ${JSON.stringify(raw.subarray(0, 4).toString("latin1"))}`, 0);
  }
  const version = raw.readUInt16LE(4);
  if (version !== SPK_VERSION) {
    throw new FormatError(`unsupported version ${version}`, 4);
  }
  const h = raw.readUInt32LE(6);
  const w = raw.readUInt32LE(10);
  const t = raw.readUInt32LE(14);
  const freq = raw.readDoubleLE(18);
  const theta = raw.readDoubleLE(26);
  if (Math.min(t, h, w) < 1) {
    throw new FormatError(`invalid dimensions T=${t} H=${h} W=${w}`, 6);
  }
  const expected = payloadBytes(t, h, w);
  const payload = raw.subarray(HEADER_SIZE);
  if (payload.length !== expected) {
    throw new FormatError(
      `payload has ${payload.length} bytes, expected ${expected}`,
      HEADER_SIZE + Math.min(payload.length, expected),
    );
  }
  const bits = new Uint8Array(t * h * w);
  const lb = lineBytes(w);
  for (let ti = 0; ti < t; ti++) {
    for (let y = 0; y < h; y++) {
      const lineOff = (ti * h + y) * lb;
      const bitOff = (ti * h + y) * w;
      for (let x = 0; x < w; x++) {
        bits[bitOff + x] = (payload[lineOff + (x >> 3)] >> (7 - (x & 7))) & 1;
      }
    }
  }
  return { bits, t, h, w, freq, theta };
}
