/** Shared test utilities: a deterministic PRNG, request builders, and a
 * runner for the independent native reference script. */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { BevGeometry, PoolRequest } from "../src/index.js";

/** mulberry32: small deterministic PRNG, uniform in [0, 1). */
export function makeRand(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export const SMALL_BEV: BevGeometry = {
  xRange: [-8, 8],
  yRange: [-8, 8],
  zRange: [-2, 2],
  pillar: [1, 1, 4],
};

export function randomPoolRequest(rand: () => number, n: number, channels: number): PoolRequest {
  const positions = new Float32Array(3 * n);
  for (let i = 0; i < n; i++) {
    positions[3 * i] = -10 + 20 * rand();      // some points out of range
    positions[3 * i + 1] = -10 + 20 * rand();
    positions[3 * i + 2] = -3 + 6 * rand();
  }
  const depthScores = new Float32Array(n);
  const semanticScores = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    depthScores[i] = rand();
    semanticScores[i] = rand();
  }
  const features = new Float32Array(n * channels);
  for (let i = 0; i < features.length; i++) {
    features[i] = Math.fround(4 * rand() - 2);
  }
  return {
    positions,
    depthScores,
    semanticScores,
    features,
    channels,
    tDepth: 0.05,
    tSemantic: 0.25,
    bev: SMALL_BEV,
  };
}

const testDir = path.dirname(fileURLToPath(import.meta.url));

export function makeTempDir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "sembev-frontend-test-"));
}

export interface PoolReference {
  grid: number[];
  valid_fraction: number | null;
  n_valid: number;
}

export interface PasteReference {
  grid: number[];
  targets: number[][];
}

/** Run the independent native reference over a batch of request dirs. */
export function runNativeReference<T>(op: "pool" | "paste", dirs: string[]): T[] {
  const python = process.env.SEMBEV_PYTHON ?? "python3";
  const res = spawnSync(python, [path.join(testDir, "native_reference.py"), op, ...dirs], {
    encoding: "utf-8",
    maxBuffer: 1 << 28,
  });
  if (res.status !== 0) {
    throw new Error(`native reference failed (${res.status}): ${res.stderr}`);
  }
  return JSON.parse(res.stdout) as T[];
}
