/**
 * Array-facing bindings for the native semantic-aware BEV pooling kernels.
 *
 * Three calls cross the boundary: `poolArrays` (filter + index + pool over
 * flat contiguous float32 arrays), `pasteArrays` (elementwise grid addition
 * plus target union), and `nativeVersion`. Each call spawns the native
 * adapter in a fresh process, exchanging inputs and outputs through binary
 * files (grids in the SABG format), so results are bit-exact against the
 * native kernels and no interpreter state is shared or retained between
 * calls.
 */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { Grid, decodeGrid, encodeF32, encodeGrid, makeGrid } from "./wire.js";

export { Grid, decodeGrid, encodeGrid, gridValue, makeGrid } from "./wire.js";

/** A caller-side array has the wrong length for its declared shape. */
export class ArrayShapeError extends Error {
  constructor(readonly field: string, message: string) {
    super(message);
    this.name = "ArrayShapeError";
  }
}

/** The two grids handed to pasteArrays disagree in dimensions. */
export class GridDimensionError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "GridDimensionError";
  }
}

/** The native side rejected the request; `field` names the offender. */
export class NativeError extends Error {
  constructor(readonly kind: string, readonly field: string | null, message: string) {
    super(message);
    this.name = "NativeError";
  }
}

export interface BevGeometry {
  xRange: [number, number];
  yRange: [number, number];
  zRange: [number, number];
  pillar: [number, number, number];
}

export interface PoolRequest {
  /** (n*3) ego positions, row-major x0 y0 z0 x1 ... */
  positions: Float32Array;
  /** (n) per-point depth scores in [0, 1]. */
  depthScores: Float32Array;
  /** (n) per-point foreground scores in [0, 1]. */
  semanticScores: Float32Array;
  /** (n*channels) context features, row-major. */
  features: Float32Array;
  channels: number;
  tDepth: number;
  tSemantic: number;
  bev: BevGeometry;
}

export interface PoolResult {
  grid: Grid;
  /**
   * Share of points surviving both thresholds and the range check;
   * null for an empty request, where the fraction is undefined (the
   * native kernel treats n = 0 as a precondition error).
   */
  validFraction: number | null;
  nValid: number;
}

export interface Target {
  center: [number, number, number];
  size: [number, number, number];
  yaw: number;
  classId: number;
}

function packageRoot(): string {
  // one level up from either src/ (direct TS execution) or dist/ (compiled)
  return path.resolve(path.dirname(fileURLToPath(import.meta.url)), "..");
}

function adapterPath(): string {
  return path.join(packageRoot(), "adapter", "sembev_adapter.py");
}

function pythonExecutable(): string {
  return process.env.SEMBEV_PYTHON ?? "python3";
}

interface AdapterRun {
  stdout: string;
}

function runAdapter(args: string[]): AdapterRun {
  const res = spawnSync(pythonExecutable(), [adapterPath(), ...args], {
    encoding: "utf-8",
    maxBuffer: 1 << 28,
  });
  if (res.error) {
    throw new NativeError("spawn", null, `cannot start native adapter: ${res.error.message}`);
  }
  if (res.status === 10) {
    try {
      const parsed = JSON.parse(res.stdout) as {
        error: { kind: string; field: string | null; message: string };
      };
      throw new NativeError(parsed.error.kind, parsed.error.field, parsed.error.message);
    } catch (err) {
      if (err instanceof NativeError) throw err;
      throw new NativeError("protocol", null, `unparseable adapter error: ${res.stdout}`);
    }
  }
  if (res.status !== 0) {
    throw new NativeError("crash", null, `adapter exited ${res.status}: ${res.stderr}`);
  }
  return { stdout: res.stdout };
}

function withRequestDir<T>(fn: (dir: string) => T): T {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "sembev-arrays-"));
  try {
    return fn(dir);
  } finally {
    fs.rmSync(dir, { recursive: true, force: true });
  }
}

function validatePoolRequest(req: PoolRequest): number {
  if (!Number.isInteger(req.channels) || req.channels < 1) {
    throw new ArrayShapeError("channels", `channels must be a positive integer, got ${req.channels}`);
  }
  if (req.positions.length % 3 !== 0) {
    throw new ArrayShapeError("positions",
      `positions length ${req.positions.length} is not a multiple of 3`);
  }
  const n = req.positions.length / 3;
  if (req.depthScores.length !== n) {
    throw new ArrayShapeError("depthScores",
      `depthScores has ${req.depthScores.length} entries for ${n} points`);
  }
  if (req.semanticScores.length !== n) {
    throw new ArrayShapeError("semanticScores",
      `semanticScores has ${req.semanticScores.length} entries for ${n} points`);
  }
  if (req.features.length !== n * req.channels) {
    throw new ArrayShapeError("features",
      `features has ${req.features.length} values, expected ${n * req.channels}`);
  }
  return n;
}

/** Serialize a pool request into `dir` (exposed for cross-checking tests). */
export function writePoolRequestDir(dir: string, req: PoolRequest, n: number): void {
  fs.writeFileSync(path.join(dir, "request.json"), JSON.stringify({
    n,
    channels: req.channels,
    t_depth: req.tDepth,
    t_semantic: req.tSemantic,
    bev: {
      x_range: req.bev.xRange,
      y_range: req.bev.yRange,
      z_range: req.bev.zRange,
      pillar: req.bev.pillar,
    },
  }));
  fs.writeFileSync(path.join(dir, "positions.bin"), encodeF32(req.positions));
  fs.writeFileSync(path.join(dir, "depth_scores.bin"), encodeF32(req.depthScores));
  fs.writeFileSync(path.join(dir, "semantic_scores.bin"), encodeF32(req.semanticScores));
  fs.writeFileSync(path.join(dir, "features.bin"), encodeF32(req.features));
}

/**
 * Filter, index, and pool a batch of virtual points on the native side.
 * Bit-exact against calling the native fast pooling path directly on the
 * same inputs.
 */
export function poolArrays(req: PoolRequest): PoolResult {
  const n = validatePoolRequest(req);
  return withRequestDir((dir) => {
    writePoolRequestDir(dir, req, n);
    runAdapter(["pool", dir]);
    const grid = decodeGrid(fs.readFileSync(path.join(dir, "response", "grid.sabg")));
    const result = JSON.parse(
      fs.readFileSync(path.join(dir, "response", "result.json"), "utf-8")) as {
        valid_fraction: number | null; n_valid: number;
      };
    return { grid, validFraction: result.valid_fraction, nValid: result.n_valid };
  });
}

function targetsToRows(targets: Target[]): number[][] {
  return targets.map((t) => [...t.center, ...t.size, t.yaw, t.classId]);
}

function rowsToTargets(rows: number[][]): Target[] {
  return rows.map((r) => ({
    center: [r[0], r[1], r[2]] as [number, number, number],
    size: [r[3], r[4], r[5]] as [number, number, number],
    yaw: r[6],
    classId: r[7],
  }));
}

/**
 * Elementwise grid addition plus target union, computed by the native
 * paste kernel. Identical to the native result on the same inputs.
 */
export function pasteArrays(
  a: Grid, b: Grid, targetsA: Target[], targetsB: Target[],
): { grid: Grid; targets: Target[] } {
  if (a.nx !== b.nx || a.ny !== b.ny || a.channels !== b.channels) {
    throw new GridDimensionError(
      `grid dims differ: (${a.nx}, ${a.ny}, ${a.channels}) vs (${b.nx}, ${b.ny}, ${b.channels})`);
  }
  return withRequestDir((dir) => {
    fs.writeFileSync(path.join(dir, "request.json"), JSON.stringify({ op: "paste" }));
    fs.writeFileSync(path.join(dir, "a.sabg"), encodeGrid(a));
    fs.writeFileSync(path.join(dir, "b.sabg"), encodeGrid(b));
    fs.writeFileSync(path.join(dir, "targets_a.json"), JSON.stringify(targetsToRows(targetsA)));
    fs.writeFileSync(path.join(dir, "targets_b.json"), JSON.stringify(targetsToRows(targetsB)));
    runAdapter(["paste", dir]);
    const grid = decodeGrid(fs.readFileSync(path.join(dir, "response", "combined.sabg")));
    const rows = JSON.parse(
      fs.readFileSync(path.join(dir, "response", "targets.json"), "utf-8")) as number[][];
    return { grid, targets: rowsToTargets(rows) };
  });
}

/** Version string of the native library backing the kernels. */
export function nativeVersion(): string {
  const run = runAdapter(["version"]);
  return (JSON.parse(run.stdout) as { version: string }).version;
}
