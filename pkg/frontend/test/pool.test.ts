/** Cross-boundary equivalence and error-shape tests for poolArrays. */

import * as fs from "node:fs";
import * as path from "node:path";

import { describe, expect, it } from "vitest";

import {
  ArrayShapeError,
  NativeError,
  gridValue,
  nativeVersion,
  poolArrays,
  writePoolRequestDir,
} from "../src/index.js";
import {
  PoolReference,
  SMALL_BEV,
  makeRand,
  makeTempDir,
  randomPoolRequest,
  runNativeReference,
} from "./helpers.js";

describe("poolArrays equivalence", () => {
  it("matches the native kernels bit-exactly on 100 randomized instances", () => {
    const rand = makeRand(0xbeef);
    const requests = [];
    const dirs: string[] = [];
    const root = makeTempDir();
    try {
      for (let trial = 0; trial < 100; trial++) {
        const n = Math.floor(rand() * 400);
        const channels = 1 + Math.floor(rand() * 6);
        const req = randomPoolRequest(rand, n, channels);
        const dir = path.join(root, `req-${trial}`);
        fs.mkdirSync(dir);
        writePoolRequestDir(dir, req, n);
        requests.push(req);
        dirs.push(dir);
      }
      const references = runNativeReference<PoolReference>("pool", dirs);
      for (let trial = 0; trial < requests.length; trial++) {
        const result = poolArrays(requests[trial]);
        const ref = references[trial];
        expect(result.grid.data.length).toBe(ref.grid.length);
        for (let i = 0; i < ref.grid.length; i++) {
          if (result.grid.data[i] !== ref.grid[i]) {
            throw new Error(
              `trial ${trial}: grid[${i}] = ${result.grid.data[i]} != native ${ref.grid[i]}`);
          }
        }
        expect(result.validFraction).toBe(ref.valid_fraction);
        expect(result.nValid).toBe(ref.n_valid);
      }
    } finally {
      fs.rmSync(root, { recursive: true, force: true });
    }
  }, 600_000);

  it("pools a single point into the expected pillar with the exact value", () => {
    const alpha = Math.fround(0.75);
    const feature = Math.fround(1.3);
    const result = poolArrays({
      positions: new Float32Array([0.5, -1.5, 0.0]),
      depthScores: new Float32Array([alpha]),
      semanticScores: new Float32Array([1.0]),
      features: new Float32Array([feature]),
      channels: 1,
      tDepth: 0.0,
      tSemantic: 0.0,
      bev: SMALL_BEV,
    });
    expect(result.grid.nx).toBe(16);
    expect(result.grid.ny).toBe(16);
    expect(result.validFraction).toBe(1.0);
    // ix = floor((0.5+8)/1) = 8, iy = floor((-1.5+8)/1) = 6
    expect(gridValue(result.grid, 8, 6, 0)).toBe(Math.fround(alpha * feature));
    let nonzero = 0;
    for (const v of result.grid.data) if (v !== 0) nonzero++;
    expect(nonzero).toBe(1);
  }, 60_000);

  it("returns a zero grid and a null fraction for an empty request", () => {
    const result = poolArrays({
      positions: new Float32Array(0),
      depthScores: new Float32Array(0),
      semanticScores: new Float32Array(0),
      features: new Float32Array(0),
      channels: 2,
      tDepth: 0.0,
      tSemantic: 0.0,
      bev: SMALL_BEV,
    });
    expect(result.validFraction).toBeNull();
    expect(result.nValid).toBe(0);
    expect(result.grid.data.every((v) => v === 0)).toBe(true);
  }, 60_000);

  it("is stateless: identical inputs give identical outputs", () => {
    const rand = makeRand(7);
    const req = randomPoolRequest(rand, 50, 3);
    const a = poolArrays(req);
    const b = poolArrays(req);
    expect(Array.from(a.grid.data)).toEqual(Array.from(b.grid.data));
    expect(a.validFraction).toBe(b.validFraction);
  }, 120_000);
});

describe("poolArrays malformed inputs", () => {
  const base = () => randomPoolRequest(makeRand(1), 10, 2);

  it("names the offending field on a length mismatch", () => {
    const req = base();
    req.depthScores = new Float32Array(9);
    try {
      poolArrays(req);
      throw new Error("expected ArrayShapeError");
    } catch (err) {
      expect(err).toBeInstanceOf(ArrayShapeError);
      expect((err as ArrayShapeError).field).toBe("depthScores");
    }
  });

  it("rejects a features array of the wrong size", () => {
    const req = base();
    req.features = new Float32Array(5);
    expect(() => poolArrays(req)).toThrowError(ArrayShapeError);
  });

  it("rejects non-integer channel counts", () => {
    const req = base();
    req.channels = 0;
    try {
      poolArrays(req);
      throw new Error("expected ArrayShapeError");
    } catch (err) {
      expect((err as ArrayShapeError).field).toBe("channels");
    }
  });

  it("surfaces native score-range violations with the field name", () => {
    const req = base();
    req.depthScores[3] = 1.5;
    try {
      poolArrays(req);
      throw new Error("expected NativeError");
    } catch (err) {
      expect(err).toBeInstanceOf(NativeError);
      expect((err as NativeError).field).toBe("depth_scores");
    }
  }, 60_000);

  it("surfaces non-finite features with the field name", () => {
    const req = base();
    req.features[0] = Number.NaN;
    try {
      poolArrays(req);
      throw new Error("expected NativeError");
    } catch (err) {
      expect(err).toBeInstanceOf(NativeError);
      expect((err as NativeError).field).toBe("features");
    }
  }, 60_000);

  it("surfaces invalid grid geometry with the bev field", () => {
    const req = base();
    req.bev = { ...req.bev, pillar: [0.7, 1, 4] };
    try {
      poolArrays(req);
      throw new Error("expected NativeError");
    } catch (err) {
      expect(err).toBeInstanceOf(NativeError);
      expect((err as NativeError).field).toBe("bev");
    }
  }, 60_000);
});

describe("nativeVersion", () => {
  it("matches the native library version", () => {
    expect(nativeVersion()).toBe("0.1.0");
  }, 60_000);
});
