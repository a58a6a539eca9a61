/**
 * Binary wire formats shared with the native side.
 *
 * Grids use the SABG container (little-endian): magic "SABG", version u16,
 * nx u32, ny u32, C u32, then nx*ny*C float32 values ordered iy-outer,
 * ix-inner, channel-innermost. In memory this package keeps grid data
 * ix-major instead — `data[(ix*ny + iy)*channels + c]` — matching the
 * native library's (nx, ny, C) array layout.
 *
 * Raw point arrays travel as plain little-endian float32 blobs.
 */

export interface Grid {
  readonly nx: number;
  readonly ny: number;
  readonly channels: number;
  /** (nx*ny*channels) values, ix-major: data[(ix*ny + iy)*channels + c]. */
  readonly data: Float32Array;
}

const MAGIC = "SABG";
const VERSION = 1;
const HEADER_BYTES = 4 + 2 + 4 + 4 + 4;

export function makeGrid(nx: number, ny: number, channels: number, data?: Float32Array): Grid {
  const expected = nx * ny * channels;
  if (data !== undefined && data.length !== expected) {
    throw new Error(`grid data length ${data.length} != nx*ny*C = ${expected}`);
  }
  return { nx, ny, channels, data: data ?? new Float32Array(expected) };
}

export function gridValue(grid: Grid, ix: number, iy: number, c: number): number {
  return grid.data[(ix * grid.ny + iy) * grid.channels + c];
}

/** Serialize a grid into SABG bytes (reorders into the file's iy-outer order). */
export function encodeGrid(grid: Grid): Buffer {
  const { nx, ny, channels } = grid;
  const buf = Buffer.alloc(HEADER_BYTES + 4 * nx * ny * channels);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt16LE(VERSION, 4);
  buf.writeUInt32LE(nx, 6);
  buf.writeUInt32LE(ny, 10);
  buf.writeUInt32LE(channels, 14);
  let off = HEADER_BYTES;
  for (let iy = 0; iy < ny; iy++) {
    for (let ix = 0; ix < nx; ix++) {
      const base = (ix * ny + iy) * channels;
      for (let c = 0; c < channels; c++) {
        buf.writeFloatLE(grid.data[base + c], off);
        off += 4;
      }
    }
  }
  return buf;
}

/** Parse SABG bytes back into an ix-major grid. */
export function decodeGrid(buf: Buffer): Grid {
  if (buf.length < HEADER_BYTES) {
    throw new Error("truncated grid header");
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`bad grid magic ${buf.toString("ascii", 0, 4)}`);
  }
  const version = buf.readUInt16LE(4);
  if (version !== VERSION) {
    throw new Error(`unsupported grid version ${version}`);
  }
  const nx = buf.readUInt32LE(6);
  const ny = buf.readUInt32LE(10);
  const channels = buf.readUInt32LE(14);
  const expected = HEADER_BYTES + 4 * nx * ny * channels;
  if (buf.length !== expected) {
    throw new Error(`grid payload: expected ${expected} bytes, found ${buf.length}`);
  }
  const data = new Float32Array(nx * ny * channels);
  let off = HEADER_BYTES;
  for (let iy = 0; iy < ny; iy++) {
    for (let ix = 0; ix < nx; ix++) {
      const base = (ix * ny + iy) * channels;
      for (let c = 0; c < channels; c++) {
        data[base + c] = buf.readFloatLE(off);
        off += 4;
      }
    }
  }
  return { nx, ny, channels, data };
}

/** Little-endian float32 blob for one flat array. */
export function encodeF32(values: Float32Array): Buffer {
  const buf = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], i * 4);
  }
  return buf;
}
