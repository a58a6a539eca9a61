"""Semantic-aware BEV pooling: scoring, dual-threshold filtering, and
scatter-sum accumulation of virtual points into a pillar grid.

Two pooling paths share one contract (per pillar, sum depth_score * feature
over its points in ascending original-point order, float32 products into a
float64 accumulator, downcast once at the end):

* ``pool_reference`` - the brute-force oracle, a single unbuffered
  scatter-add over points in their original order. Single-threaded by
  contract.
* ``pool_fast`` - stable-sorts points by pillar once (``build_index``) and
  accumulates each pillar's contiguous interval with a jitted kernel. The
  interval loop is the designated parallel region: intervals touch
  disjoint pillars, so workers need no synchronization and the result is
  deterministic regardless of thread count.

Both produce bit-identical grids because each pillar sees the exact same
sequence of float64 additions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
from numba import njit, prange

from .geometry import BevConfig, Camera, cam_to_ego, flat_pillar_ids, pillar_indices

__all__ = [
    "VirtualPoints",
    "PoolConfig",
    "PoolingIndex",
    "filter_gate",
    "score_points",
    "select_valid",
    "pool_reference",
    "build_index",
    "pool_fast",
    "valid_fraction",
]

# Defaults retain ~1.8% of points on detectors trained on real driving
# data; on the synthetic oracle scenes the fraction is scene-dependent.
DEFAULT_DEPTH_THRESHOLD = 0.0085
DEFAULT_SEMANTIC_THRESHOLD = 0.25


@dataclass(frozen=True)
class PoolConfig:
    """Filtering thresholds plus the target grid geometry."""

    bev: BevConfig
    t_depth: float = DEFAULT_DEPTH_THRESHOLD
    t_semantic: float = DEFAULT_SEMANTIC_THRESHOLD

    def __post_init__(self):
        if not (np.isfinite(self.t_depth) and np.isfinite(self.t_semantic)):
            raise ValueError("thresholds must be finite")


@dataclass(frozen=True, eq=False)
class VirtualPoints:
    """A batch of frustum virtual points, stored column-wise.

    Each point is one (feature cell, depth bin) lattice element: its ego
    position, pixel origin (camera id, cell row i, cell col j), depth bin,
    depth score, per-pixel semantic score, and raw context feature. The
    pooled contribution depth_score * feature is materialized lazily at
    pooling time.
    """

    positions: np.ndarray        # (n, 3) float64 ego coordinates
    cam_ids: np.ndarray          # (n,) int32
    pixel_rows: np.ndarray       # (n,) int32 feature-cell row i
    pixel_cols: np.ndarray       # (n,) int32 feature-cell col j
    depth_bins: np.ndarray       # (n,) int32
    depth_scores: np.ndarray     # (n,) float32 in [0, 1]
    semantic_scores: np.ndarray  # (n,) float32 in [0, 1]
    features: np.ndarray         # (n, C) float32

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = pos.shape[0]
        object.__setattr__(self, "positions", pos)
        for name in ("cam_ids", "pixel_rows", "pixel_cols", "depth_bins"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int32).reshape(-1)
            if arr.shape[0] != n:
                raise ValueError(f"{name} has {arr.shape[0]} entries for {n} points")
            object.__setattr__(self, name, arr)
        for name in ("depth_scores", "semantic_scores"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float32).reshape(-1)
            if arr.shape[0] != n:
                raise ValueError(f"{name} has {arr.shape[0]} entries for {n} points")
            if n and (arr.min() < 0.0 or arr.max() > 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
            object.__setattr__(self, name, arr)
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ValueError(f"features must be (n, C) with n={n}, got {feats.shape}")
        if n and not np.isfinite(feats).all():
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", feats)

    def __len__(self):
        return self.positions.shape[0]

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "VirtualPoints":
        """Order-preserving subset by integer indices."""
        idx = np.asarray(indices, dtype=np.int64)
        return VirtualPoints(
            positions=self.positions[idx],
            cam_ids=self.cam_ids[idx],
            pixel_rows=self.pixel_rows[idx],
            pixel_cols=self.pixel_cols[idx],
            depth_bins=self.depth_bins[idx],
            depth_scores=self.depth_scores[idx],
            semantic_scores=self.semantic_scores[idx],
            features=self.features[idx],
        )

    def with_positions(self, positions) -> "VirtualPoints":
        """Same points at new ego positions (scores and features kept)."""
        return VirtualPoints(
            positions=positions,
            cam_ids=self.cam_ids,
            pixel_rows=self.pixel_rows,
            pixel_cols=self.pixel_cols,
            depth_bins=self.depth_bins,
            depth_scores=self.depth_scores,
            semantic_scores=self.semantic_scores,
            features=self.features,
        )

    @classmethod
    def concatenate(cls, parts) -> "VirtualPoints":
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to concatenate")
        return cls(
            positions=np.concatenate([p.positions for p in parts]),
            cam_ids=np.concatenate([p.cam_ids for p in parts]),
            pixel_rows=np.concatenate([p.pixel_rows for p in parts]),
            pixel_cols=np.concatenate([p.pixel_cols for p in parts]),
            depth_bins=np.concatenate([p.depth_bins for p in parts]),
            depth_scores=np.concatenate([p.depth_scores for p in parts]),
            semantic_scores=np.concatenate([p.semantic_scores for p in parts]),
            features=np.concatenate([p.features for p in parts]),
        )


def filter_gate(x, y):
    """Hard threshold gate: 1 where x >= y, else 0 (boundary kept)."""
    out = np.where(np.asarray(x) >= np.asarray(y), 1, 0)
    if out.ndim == 0:
        return int(out)
    return out


def score_points(context, alpha, beta, frustum, cam: Camera, cam_id=0) -> VirtualPoints:
    """Attach per-point scores and features to a projected frustum lattice.

    ``context`` is (C, Hf, Wf), ``alpha`` (n_bins, Hf, Wf), ``beta``
    (Hf, Wf); ``frustum`` must come from build_frustum for the same
    (Hf, Wf) and bin count (cell-major, depth innermost). The semantic
    score is per pixel and shared across all depth bins of that pixel.
    """
    ctx = np.asarray(context)
    a = np.asarray(alpha)
    b = np.asarray(beta)
    fr = np.asarray(frustum, dtype=np.float64)
    if ctx.ndim != 3 or a.ndim != 3 or b.ndim != 2:
        raise ValueError("context must be (C, Hf, Wf), alpha (n_bins, Hf, Wf), beta (Hf, Wf)")
    hf, wf = b.shape
    n_bins = a.shape[0]
    if a.shape[1:] != (hf, wf) or ctx.shape[1:] != (hf, wf):
        raise ValueError(
            f"spatial shapes disagree: alpha {a.shape[1:]}, context {ctx.shape[1:]}, beta {b.shape}")
    n = hf * wf * n_bins
    if fr.shape != (n, 3):
        raise ValueError(f"frustum shape {fr.shape} does not match lattice size ({n}, 3)")

    rows, cols, bins_idx = np.meshgrid(
        np.arange(hf, dtype=np.int32), np.arange(wf, dtype=np.int32),
        np.arange(n_bins, dtype=np.int32), indexing="ij")
    return VirtualPoints(
        positions=cam_to_ego(fr, cam),
        cam_ids=np.full(n, cam_id, dtype=np.int32),
        pixel_rows=rows.ravel(),
        pixel_cols=cols.ravel(),
        depth_bins=bins_idx.ravel(),
        depth_scores=np.moveaxis(a, 0, -1).ravel().astype(np.float32),
        semantic_scores=np.repeat(b.ravel(), n_bins).astype(np.float32),
        features=np.repeat(np.asarray(ctx, dtype=np.float32).reshape(ctx.shape[0], -1).T,
                           n_bins, axis=0),
    )


def _valid_mask(points: VirtualPoints, cfg: PoolConfig) -> np.ndarray:
    _, _, in_range = pillar_indices(points.positions, cfg.bev)
    keep_depth = filter_gate(points.depth_scores, np.float32(cfg.t_depth)).astype(bool)
    keep_sem = filter_gate(points.semantic_scores, np.float32(cfg.t_semantic)).astype(bool)
    return keep_depth & keep_sem & in_range


def select_valid(points: VirtualPoints, cfg: PoolConfig) -> VirtualPoints:
    """Order-preserving subset of points passing both thresholds and lying
    inside the grid."""
    return points.take(np.flatnonzero(_valid_mask(points, cfg)))


def valid_fraction(points: VirtualPoints, cfg: PoolConfig) -> float:
    """Proportion of points that survive filtering, in [0, 1]."""
    if len(points) == 0:
        raise ValueError("valid_fraction is undefined for an empty point list")
    return float(np.count_nonzero(_valid_mask(points, cfg))) / len(points)


def _inrange_flat_ids(points: VirtualPoints, cfg: PoolConfig) -> np.ndarray:
    ix, iy, ok = pillar_indices(points.positions, cfg.bev)
    if not ok.all():
        raise ValueError("pooling expects pre-filtered points; some are out of range")
    return flat_pillar_ids(ix, iy, cfg.bev)


def pool_reference(points: VirtualPoints, cfg: PoolConfig) -> np.ndarray:
    """Oracle pooling: unbuffered scatter-add in original point order.

    Returns the (nx, ny, C) grid as float32 after float64 accumulation.
    """
    bev = cfg.bev
    acc = np.zeros((bev.n_pillars, points.channels), dtype=np.float64)
    if len(points):
        flat = _inrange_flat_ids(points, cfg)
        contrib = points.depth_scores[:, None] * points.features  # float32 products
        np.add.at(acc, flat, contrib)
    return acc.reshape(bev.nx, bev.ny, points.channels).astype(np.float32)


@dataclass(frozen=True, eq=False)
class PoolingIndex:
    """Precomputed pooling order: a stable pillar sort plus the contiguous
    interval each occupied pillar owns in the sorted array."""

    order: np.ndarray       # (n,) permutation, stable sort by pillar id
    starts: np.ndarray      # (k,) interval starts into the sorted array
    lengths: np.ndarray     # (k,) interval lengths
    pillar_ids: np.ndarray  # (k,) strictly increasing flat pillar ids
    n_points: int

    def __post_init__(self):
        if self.starts.shape != self.lengths.shape or self.starts.shape != self.pillar_ids.shape:
            raise ValueError("interval arrays must agree in length")
        if int(self.lengths.sum()) != self.n_points:
            raise ValueError("intervals do not partition the point set")
        if self.pillar_ids.size > 1 and not np.all(np.diff(self.pillar_ids) > 0):
            raise ValueError("pillar ids must be strictly increasing")


def build_index(points: VirtualPoints, cfg: PoolConfig) -> PoolingIndex:
    """Stable-sort points by flattened pillar id and record per-pillar
    intervals. Stability keeps the original order within each pillar."""
    if len(points) == 0:
        z = np.zeros(0, dtype=np.int64)
        return PoolingIndex(order=z, starts=z, lengths=z, pillar_ids=z, n_points=0)
    flat = _inrange_flat_ids(points, cfg)
    order = np.argsort(flat, kind="stable")
    flat_sorted = flat[order]
    starts = np.flatnonzero(np.r_[True, flat_sorted[1:] != flat_sorted[:-1]]).astype(np.int64)
    lengths = np.diff(np.r_[starts, flat_sorted.size]).astype(np.int64)
    return PoolingIndex(order=order.astype(np.int64), starts=starts, lengths=lengths,
                        pillar_ids=flat_sorted[starts], n_points=len(points))


@njit(parallel=True, cache=True)
def _interval_pool(feats, alphas, starts, lengths, rows, acc):
    # Intervals write disjoint accumulator rows; the inner loop is strictly
    # sequential so each pillar sums in ascending original-point order.
    for s in prange(starts.shape[0]):
        lo = starts[s]
        hi = lo + lengths[s]
        r = rows[s]
        for k in range(lo, hi):
            w = alphas[k]
            for c in range(feats.shape[1]):
                acc[r, c] += w * feats[k, c]


def pool_fast(index: PoolingIndex, points: VirtualPoints, cfg: PoolConfig) -> np.ndarray:
    """Interval-precomputed pooling; result contract identical to
    pool_reference (bit-for-bit under the deterministic order)."""
    if index.n_points != len(points):
        raise ValueError(
            f"stale index: built for {index.n_points} points, got {len(points)}")
    bev = cfg.bev
    acc = np.zeros((bev.n_pillars, points.channels), dtype=np.float64)
    if len(points):
        feats = points.features[index.order]
        alphas = points.depth_scores[index.order]
        _interval_pool(feats, alphas, index.starts, index.lengths, index.pillar_ids, acc)
    return acc.reshape(bev.nx, bev.ny, points.channels).astype(np.float32)
