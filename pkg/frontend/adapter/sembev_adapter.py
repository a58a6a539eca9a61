#!/usr/bin/env python3
"""Subprocess adapter: native pooling and paste kernels over flat arrays.

Reads a request directory prepared by the TypeScript caller and writes a
``response/`` subdirectory next to it. Grids travel in the SABG binary
format; raw arrays are little-endian float32 blobs. Malformed requests
exit with code 10 and a single JSON error object on stdout:

    {"error": {"kind": "...", "field": "..." | null, "message": "..."}}

Operations:
    pool <dir>    request.json + positions.bin + depth_scores.bin +
                  semantic_scores.bin + features.bin -> grid.sabg, result.json
    paste <dir>   request.json + a.sabg + b.sabg + targets_a.json +
                  targets_b.json -> combined.sabg, targets.json, result.json
    version       prints {"version": ...}
"""

import json
import sys
from pathlib import Path

import numpy as np

import sembev
from sembev import (
    BevConfig,
    Boxes3D,
    PoolConfig,
    VirtualPoints,
    bev_paste,
    build_index,
    pool_fast,
    select_valid,
    valid_fraction,
)
from sembev.gridio import export_grid, read_grid

STRUCTURED_ERROR_EXIT = 10


class RequestError(Exception):
    def __init__(self, kind, message, field=None):
        super().__init__(message)
        self.kind = kind
        self.field = field


def _read_f32(req_dir, name, field, expected):
    path = req_dir / name
    if not path.exists():
        raise RequestError("missing-input", f"{name} not found", field)
    data = np.fromfile(path, dtype="<f4")
    if data.size != expected:
        raise RequestError(
            "shape", f"{field}: expected {expected} float32 values, found {data.size}", field)
    return data


def _bev_config(meta, channels):
    bev = meta.get("bev", {})
    try:
        return BevConfig(
            x_range=tuple(bev["x_range"]),
            y_range=tuple(bev["y_range"]),
            z_range=tuple(bev["z_range"]),
            pillar=tuple(bev["pillar"]),
            channels=channels,
        )
    except KeyError as exc:
        raise RequestError("config", f"bev geometry missing {exc}", field="bev")
    except ValueError as exc:
        raise RequestError("config", str(exc), field="bev")


def _check_unit_interval(values, field):
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise RequestError("invalid-value", f"{field} must lie in [0, 1]", field)


def do_pool(req_dir: Path) -> None:
    meta = json.loads((req_dir / "request.json").read_text())
    n = int(meta["n"])
    channels = int(meta["channels"])
    if n < 0 or channels < 1:
        raise RequestError("shape", f"invalid n={n}, channels={channels}", field="channels")
    bev = _bev_config(meta, channels)
    cfg = PoolConfig(bev=bev, t_depth=float(meta["t_depth"]),
                     t_semantic=float(meta["t_semantic"]))

    positions = _read_f32(req_dir, "positions.bin", "positions", 3 * n)
    depth_scores = _read_f32(req_dir, "depth_scores.bin", "depth_scores", n)
    semantic_scores = _read_f32(req_dir, "semantic_scores.bin", "semantic_scores", n)
    features = _read_f32(req_dir, "features.bin", "features", n * channels)
    _check_unit_interval(depth_scores, "depth_scores")
    _check_unit_interval(semantic_scores, "semantic_scores")
    if features.size and not np.isfinite(features).all():
        raise RequestError("invalid-value", "features must be finite", field="features")

    points = VirtualPoints(
        positions=positions.astype(np.float64).reshape(n, 3),
        cam_ids=np.zeros(n, dtype=np.int32),
        pixel_rows=np.zeros(n, dtype=np.int32),
        pixel_cols=np.zeros(n, dtype=np.int32),
        depth_bins=np.zeros(n, dtype=np.int32),
        depth_scores=depth_scores,
        semantic_scores=semantic_scores,
        features=features.reshape(n, channels),
    )
    valid = select_valid(points, cfg)
    grid = pool_fast(build_index(valid, cfg), valid, cfg)
    fraction = valid_fraction(points, cfg) if n else None

    out = req_dir / "response"
    out.mkdir(exist_ok=True)
    export_grid(grid, out / "grid.sabg")
    (out / "result.json").write_text(json.dumps({
        "valid_fraction": fraction,
        "n_valid": int(len(valid)),
        "version": sembev.__version__,
    }))


def _targets_from_json(path, field):
    rows = json.loads(path.read_text())
    if not rows:
        return Boxes3D.empty()
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 8:
        raise RequestError("shape", f"{field}: rows must be [x y z l w h yaw class]", field)
    try:
        return Boxes3D(centers=arr[:, 0:3], sizes=arr[:, 3:6], yaws=arr[:, 6],
                       classes=arr[:, 7].astype(np.int64))
    except ValueError as exc:
        raise RequestError("invalid-value", f"{field}: {exc}", field)


def do_paste(req_dir: Path) -> None:
    grid_a = read_grid(req_dir / "a.sabg")
    grid_b = read_grid(req_dir / "b.sabg")
    targets_a = _targets_from_json(req_dir / "targets_a.json", "targets_a")
    targets_b = _targets_from_json(req_dir / "targets_b.json", "targets_b")
    try:
        combined, targets = bev_paste(grid_a, grid_b, targets_a, targets_b)
    except ValueError as exc:
        raise RequestError("dim-mismatch", str(exc), field="b")

    out = req_dir / "response"
    out.mkdir(exist_ok=True)
    export_grid(combined.astype(np.float32), out / "combined.sabg")
    rows = [[*targets.centers[i].tolist(), *targets.sizes[i].tolist(),
             float(targets.yaws[i]), int(targets.classes[i])]
            for i in range(len(targets))]
    (out / "targets.json").write_text(json.dumps(rows))
    (out / "result.json").write_text(json.dumps({"version": sembev.__version__}))


def main(argv) -> int:
    if len(argv) >= 1 and argv[0] == "version":
        print(json.dumps({"version": sembev.__version__}))
        return 0
    if len(argv) != 2 or argv[0] not in ("pool", "paste"):
        print(json.dumps({"error": {"kind": "usage", "field": None,
                                    "message": "usage: pool|paste <request-dir> | version"}}))
        return STRUCTURED_ERROR_EXIT
    op, req_dir = argv[0], Path(argv[1])
    try:
        if op == "pool":
            do_pool(req_dir)
        else:
            do_paste(req_dir)
        return 0
    except RequestError as exc:
        print(json.dumps({"error": {"kind": exc.kind, "field": exc.field,
                                    "message": str(exc)}}))
        return STRUCTURED_ERROR_EXIT
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": {"kind": "request", "field": None,
                                    "message": f"{type(exc).__name__}: {exc}"}}))
        return STRUCTURED_ERROR_EXIT


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
