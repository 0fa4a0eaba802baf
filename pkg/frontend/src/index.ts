import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import {
  Matrix,
  asMatrix,
  decodeMatrix,
  encodeMatrix,
  pointsMatrix,
} from "./binary.js";

export { Matrix, asMatrix, decodeMatrix, encodeMatrix, pointsMatrix, FormatError, MAGIC } from "./binary.js";

/** Raised when the engine process exits nonzero or cannot be spawned. */
export class EngineError extends Error {
  constructor(message: string, public readonly exitCode: number | null,
              public readonly stderr: string) {
    super(message);
  }
}

export type Scheme = "chebyshev" | "uniform";

export interface FmmOptions {
  /** Kernel name as the engine registers it (e.g. "laplacian"). */
  kernel: string;
  scheme?: Scheme;
  /** Interpolation order per axis. */
  order?: number;
  /** Octree depth; omitted lets the engine pick from the point count. */
  levels?: number;
  /** Operator compression tolerance. */
  eps?: number;
  threads?: number;
  seed?: number;
  /** Operator-table cache directory shared across runs. */
  cacheDir?: string;
  /** Domain cube edge; omitted lets the engine fit the points. */
  domainLength?: number;
  /** Domain cube center, only meaningful with domainLength. */
  domainCenter?: [number, number, number];
  /** Command that starts the engine CLI; defaults to ["boxfmm"] or the
   * BOXFMM_BIN environment variable. */
  command?: string[];
}

export interface EvaluateOptions {
  /** Evaluate at these points instead of back at the sources. */
  targets?: Matrix;
}

export interface PrecomputeResult {
  /** Seconds the engine spent building (or loading) the operator table. */
  tableSeconds: number;
  /** Bytes of the operator table actually used by the apply path. */
  tableBytes: number;
}

export interface EigOptions {
  /** Number of points in the engine-generated cloud. */
  n: number;
  /** Requested eigenpair count. */
  rank: number;
  oversample?: number;
  powerIters?: number;
}

export interface EigResult {
  /** Descending eigenvalues, length rank. */
  eigenvalues: Float64Array;
  /** (n, rank) orthonormal columns. */
  eigenvectors: Matrix;
}

/** Client for the fast-summation engine.
 *
 * Everything crosses the process boundary through the CLI and the binary
 * matrix format, so results are exactly the engine's numbers, byte for
 * byte.  Each client owns one scratch directory; close() removes it and
 * invalidates the client.
 */
export class FmmClient {
  private readonly opts: FmmOptions;
  private readonly command: string[];
  private workdir: string | null;
  private callCount = 0;

  constructor(opts: FmmOptions) {
    this.opts = { ...opts };
    this.command = opts.command
      ?? [process.env.BOXFMM_BIN ?? "boxfmm"];
    this.workdir = fs.mkdtempSync(path.join(os.tmpdir(), "boxfmm-client-"));
  }

  /** Sum kernel(target, source) * weight over all sources.
   *
   * @param points (N, 3) source coordinates
   * @param weights (N,) or (N, m) weights; m columns come back as m
   *   potential columns
   * @return (N, m) potentials, or (targets.rows, m) when targets given
   */
  evaluate(points: Matrix, weights: Matrix, options: EvaluateOptions = {}): Matrix {
    const dir = this.scratch();
    const sources = path.join(dir, "sources.bin");
    fs.writeFileSync(sources, encodeMatrix(pointsMatrix(points, weights)));
    const out = path.join(dir, "phi.bin");
    const args = ["evaluate", ...this.commonFlags(true),
                  "--sources", sources, "--out", out];
    if (options.targets) {
      const targets = path.join(dir, "targets.bin");
      fs.writeFileSync(targets, encodeMatrix(options.targets));
      args.push("--targets", targets);
    }
    this.run(args);
    return decodeMatrix(fs.readFileSync(out));
  }

  /** Build (or load) the operator table without evaluating anything.
   * Reports what the engine printed for the table stage; a warm on-disk
   * cache shows up as a large drop in tableSeconds. */
  precompute(nPoints = 512): PrecomputeResult {
    const stdout = this.run(["evaluate", ...this.commonFlags(true),
                             "--synthetic", String(nPoints),
                             "--precompute-only"]);
    const match = /operator table\s+([0-9.eE+-]+) s \(([\d,]+) bytes\)/.exec(stdout);
    if (!match) {
      throw new EngineError("engine output lacked the operator-table line",
                            0, stdout);
    }
    return {
      tableSeconds: Number(match[1]),
      tableBytes: Number(match[2].replace(/,/g, "")),
    };
  }

  /** Top-k eigenpairs of the kernel matrix on an engine-generated cloud
   * of n seeded points (the engine owns point generation here; seed and
   * kernel come from the client options). */
  randomizedEig(options: EigOptions): EigResult {
    const dir = this.scratch();
    const eigsOut = path.join(dir, "eigs.bin");
    const args = ["bench", ...this.commonFlags(false),
                  "--mode", "randsvd",
                  "--n", String(options.n),
                  "--rank", String(options.rank),
                  "--eigs-out", eigsOut];
    if (options.oversample !== undefined) {
      args.push("--oversample", String(options.oversample));
    }
    if (options.powerIters !== undefined) {
      args.push("--power-iters", String(options.powerIters));
    }
    this.run(args);
    const stacked = decodeMatrix(fs.readFileSync(eigsOut));
    const k = stacked.cols;
    const eigenvalues = stacked.data.slice(0, k);
    const eigenvectors = asMatrix(stacked.data.slice(k), stacked.rows - 1, k);
    return { eigenvalues, eigenvectors };
  }

  /** Remove the scratch directory and reject further use. */
  close(): void {
    if (this.workdir !== null) {
      fs.rmSync(this.workdir, { recursive: true, force: true });
      this.workdir = null;
    }
  }

  get closed(): boolean {
    return this.workdir === null;
  }

  private scratch(): string {
    if (this.workdir === null) {
      throw new Error("client is closed");
    }
    const dir = path.join(this.workdir, `call-${this.callCount++}`);
    fs.mkdirSync(dir);
    return dir;
  }

  /** Flags shared by every engine call.  Domain flags only exist on the
   * evaluate subcommand, so bench callers pass withDomain=false. */
  private commonFlags(withDomain: boolean): string[] {
    const o = this.opts;
    const flags = ["--kernel", o.kernel];
    if (o.scheme) flags.push("--scheme", o.scheme);
    if (o.order !== undefined) flags.push("--order", String(o.order));
    if (o.levels !== undefined) flags.push("--levels", String(o.levels));
    if (o.eps !== undefined) flags.push("--eps", String(o.eps));
    if (o.threads !== undefined) flags.push("--threads", String(o.threads));
    if (o.seed !== undefined) flags.push("--seed", String(o.seed));
    if (o.cacheDir) flags.push("--cache-dir", o.cacheDir);
    if (withDomain && o.domainLength !== undefined) {
      flags.push("--length", String(o.domainLength));
      if (o.domainCenter) {
        flags.push("--center", o.domainCenter.join(","));
      }
    }
    return flags;
  }

  private run(args: string[]): string {
    if (this.workdir === null) {
      throw new Error("client is closed");
    }
    const [cmd, ...prefix] = this.command;
    const res = spawnSync(cmd, [...prefix, ...args],
                          { encoding: "utf8", maxBuffer: 64 * 1024 * 1024 });
    if (res.error) {
      throw new EngineError(`failed to start ${cmd}: ${res.error.message}`,
                            null, "");
    }
    if (res.status !== 0) {
      throw new EngineError(
        `engine exited with ${res.status}: ${res.stderr.trim()}`,
        res.status, res.stderr);
    }
    return res.stdout;
  }
}
