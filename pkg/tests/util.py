"""Shared builders for the test suite."""

import numpy as np

from sembev import BevConfig, PoolConfig, VirtualPoints


def small_bev(channels=4, extent=8.0, pillar=1.0):
    return BevConfig(x_range=(-extent, extent), y_range=(-extent, extent),
                     z_range=(-2.0, 2.0), pillar=(pillar, pillar, 4.0),
                     channels=channels)


def random_points(rng, n, cfg: BevConfig, in_range=True, channels=None) -> VirtualPoints:
    """Random virtual points; positions uniform inside (or straddling) the
    grid, scores uniform in [0, 1], features standard normal float32."""
    c = channels if channels is not None else cfg.channels
    lo = np.array([cfg.x_range[0], cfg.y_range[0], cfg.z_range[0]])
    hi = np.array([cfg.x_range[1], cfg.y_range[1], cfg.z_range[1]])
    if in_range:
        pos = lo + rng.random((n, 3)) * (hi - lo) * 0.999
    else:
        mid = (lo + hi) / 2
        pos = mid + (rng.random((n, 3)) - 0.5) * (hi - lo) * 2.5
    return VirtualPoints(
        positions=pos,
        cam_ids=np.zeros(n, dtype=np.int32),
        pixel_rows=rng.integers(0, 16, n).astype(np.int32),
        pixel_cols=rng.integers(0, 44, n).astype(np.int32),
        depth_bins=rng.integers(0, 59, n).astype(np.int32),
        depth_scores=rng.random(n).astype(np.float32),
        semantic_scores=rng.random(n).astype(np.float32),
        features=rng.standard_normal((n, c)).astype(np.float32),
    )


def points_at(positions, features, depth_scores=None, semantic_scores=None) -> VirtualPoints:
    """Hand-built points with explicit positions/features."""
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = pos.shape[0]
    feats = np.asarray(features, dtype=np.float32)
    if feats.ndim != 2:
        feats = feats.reshape(n, -1) if n else feats.reshape(0, 1)
    ds = np.ones(n) if depth_scores is None else np.asarray(depth_scores)
    ss = np.ones(n) if semantic_scores is None else np.asarray(semantic_scores)
    return VirtualPoints(
        positions=pos,
        cam_ids=np.zeros(n, dtype=np.int32),
        pixel_rows=np.zeros(n, dtype=np.int32),
        pixel_cols=np.zeros(n, dtype=np.int32),
        depth_bins=np.zeros(n, dtype=np.int32),
        depth_scores=ds.astype(np.float32),
        semantic_scores=ss.astype(np.float32),
        features=feats,
    )
