"""Binary BEV-grid export plus a grayscale feature-norm image.

Grid file layout (all little-endian):

    magic   4 bytes  b"SABG"
    version u16      currently 1
    nx      u32
    ny      u32
    C       u32
    data    nx*ny*C float32, row-major with iy outer, ix inner,
            channel innermost

The norm image is an 8-bit binary PGM (P5) of per-pillar feature L2
norms, linearly rescaled so the largest norm maps to 255.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = ["export_grid", "read_grid", "render_norm_image", "GRID_MAGIC", "GRID_VERSION"]

GRID_MAGIC = b"SABG"
GRID_VERSION = 1
_HEADER = struct.Struct("<4sHIII")


def export_grid(grid, path) -> None:
    """Write an (nx, ny, C) float32 grid to ``path`` in the SABG format."""
    g = np.asarray(grid, dtype=np.float32)
    if g.ndim != 3:
        raise ValueError(f"grid must be (nx, ny, C), got shape {g.shape}")
    nx, ny, c = g.shape
    header = _HEADER.pack(GRID_MAGIC, GRID_VERSION, nx, ny, c)
    payload = np.ascontiguousarray(np.transpose(g, (1, 0, 2)), dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write grid to {path}: {exc}") from exc


def read_grid(path) -> np.ndarray:
    """Read a SABG grid file back into an (nx, ny, C) float32 array."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read grid from {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated grid header")
    magic, version, nx, ny, c = _HEADER.unpack_from(raw)
    if magic != GRID_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != GRID_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * nx * ny * c
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(ny, nx, c)
    return np.ascontiguousarray(np.transpose(data, (1, 0, 2)))


def render_norm_image(grid, path) -> None:
    """Write per-pillar feature norms as an 8-bit PGM image.

    Rows are iy, columns ix. An all-zero grid renders all black.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 3:
        raise ValueError(f"grid must be (nx, ny, C), got shape {g.shape}")
    norms = np.sqrt((g * g).sum(axis=2))  # (nx, ny)
    peak = norms.max()
    if peak > 0:
        img = np.round(norms / peak * 255.0).astype(np.uint8)
    else:
        img = np.zeros(norms.shape, dtype=np.uint8)
    img = img.T  # rows iy, cols ix
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
            fh.write(img.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write norm image to {path}: {exc}") from exc
