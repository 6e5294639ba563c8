/** Worker-thread entry: simulate and pack one row band. */

import { parentPort, workerData } from "node:worker_threads";

import { runBand, type BandTask } from "./encode";

const packed = runBand(workerData as BandTask);
parentPort!.postMessage(packed, [packed.buffer as ArrayBuffer]);
