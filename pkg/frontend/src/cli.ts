#!/usr/bin/env node
/**
 * spkc: native spike-stream codec.
 *
 *   spkc encode --input <dir|file.lum> --output <file.spk>
 *               [--theta <f64>] [--interp <u32>] [--threads <u32>] [--freq <f64>]
 *   spkc decode --input <file.spk> --output <img.pgm>
 *
 * Exit codes: 0 success, 2 usage or format error, 1 other failure.
 */

import * as fs from "node:fs";

import { encodeJob } from "./encode";
import { FormatError, decodeSpk } from "./format";
import { writePgm } from "./pnm";
import { rateImage } from "./simulate";

const USAGE = `usage:
  spkc encode --input <dir|file.lum> --output <file.spk> [--theta F] [--interp N] [--threads N] [--freq F]
  spkc decode --input <file.spk> --output <img.pgm>`;

interface Flags {
  [key: string]: string;
}

function parseFlags(argv: string[], allowed: Set<string>): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || !allowed.has(key)) {
      throw new UsageError(`unknown flag ${key}`);
    }
    if (i + 1 >= argv.length) {
      throw new UsageError(`flag ${key} needs a value`);
    }
    flags[key.slice(2)] = argv[i + 1];
  }
  return flags;
}

class UsageError extends Error {}

function requireFlag(flags: Flags, name: string): string {
  const value = flags[name];
  if (value === undefined) {
    throw new UsageError(`missing --${name}`);
  }
  return value;
}

async function cmdEncode(argv: string[]): Promise<number> {
  const flags = parseFlags(
    argv,
    new Set(["--input", "--output", "--theta", "--interp", "--threads", "--freq"]),
  );
  const result = await encodeJob({
    input: requireFlag(flags, "input"),
    output: requireFlag(flags, "output"),
    theta: flags.theta !== undefined ? Number(flags.theta) : 0.4,
    interp: flags.interp !== undefined ? Number(flags.interp) : 1,
    threads: flags.threads !== undefined ? Number(flags.threads) : 1,
    freq: flags.freq !== undefined ? Number(flags.freq) : 1280.0,
    reset: "carry",
  });
  console.log(
    `encoded ${result.t}x${result.h}x${result.w} stream (${result.spikes} spikes) -> ${flags.output}`,
  );
  return 0;
}

function cmdDecode(argv: string[]): number {
  const flags = parseFlags(argv, new Set(["--input", "--output"]));
  const raw = fs.readFileSync(requireFlag(flags, "input"));
  const stream = decodeSpk(raw);
  const img = rateImage(stream.bits, stream.t, stream.h, stream.w);
  writePgm(img, stream.h, stream.w, requireFlag(flags, "output"));
  console.log(`decoded ${stream.t}x${stream.h}x${stream.w} stream -> rate image ${flags.output}`);
  return 0;
}

export async function main(argv: string[]): Promise<number> {
  try {
    if (argv[0] === "encode") {
      return await cmdEncode(argv.slice(1));
    }
    if (argv[0] === "decode") {
      return cmdDecode(argv.slice(1));
    }
    console.error(USAGE);
    return 2;
  } catch (err) {
    if (err instanceof FormatError || err instanceof UsageError || err instanceof RangeError) {
      console.error(`error: ${(err as Error).message}`);
      return 2;
    }
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
