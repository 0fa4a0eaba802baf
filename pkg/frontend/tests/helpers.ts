import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { Matrix } from "../src/binary.js";

export const ENGINE = process.env.BOXFMM_BIN ?? "boxfmm";

/** Run the engine CLI directly, bypassing the client. */
export function runEngine(args: string[]): { stdout: string; stderr: string } {
  const res = spawnSync(ENGINE, args, { encoding: "utf8" });
  if (res.error) {
    throw res.error;
  }
  if (res.status !== 0) {
    throw new Error(`engine exited ${res.status}: ${res.stderr}`);
  }
  return { stdout: res.stdout, stderr: res.stderr };
}

/** Fresh scratch directory removed by the caller. */
export function tempdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "boxfmm-test-"));
}

/** Deterministic uniform generator on [0, 1); a 64-bit LCG taking the
 * top 53 bits, so fixtures are reproducible without any dependency. */
export function makeRng(seed: number): () => number {
  let state = BigInt(seed) & 0xffffffffffffffffn;
  const a = 6364136223846793005n;
  const c = 1442695040888963407n;
  const mask = 0xffffffffffffffffn;
  return () => {
    state = (state * a + c) & mask;
    return Number(state >> 11n) / 9007199254740992;
  };
}

export function randomCloud(n: number, seed: number): { points: Matrix; weights: Matrix } {
  const rng = makeRng(seed);
  const pts = new Float64Array(3 * n);
  for (let i = 0; i < pts.length; i++) {
    pts[i] = rng();
  }
  const w = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    w[i] = 2 * rng() - 1;
  }
  return {
    points: { rows: n, cols: 3, data: pts },
    weights: { rows: n, cols: 1, data: w },
  };
}

/** Write points+weights as CSV, using the shortest digit strings that
 * parse back to the identical doubles. */
export function writeCsv(file: string, points: Matrix, weights: Matrix): void {
  const lines = ["x,y,z,w1"];
  for (let r = 0; r < points.rows; r++) {
    const p = points.data.subarray(3 * r, 3 * r + 3);
    lines.push(`${p[0]},${p[1]},${p[2]},${weights.data[r]}`);
  }
  fs.writeFileSync(file, lines.join("\n") + "\n");
}
