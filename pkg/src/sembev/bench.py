"""Microbenchmark harness for the pooling path.

Times the end-to-end fast path (filter + index build + pool) on synthetic
points with a forced valid fraction, using a monotonic clock and the
median of 11 repetitions after 3 warmups. Numbers are comparable across
machines only qualitatively.
"""

from __future__ import annotations

import os
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .geometry import BevConfig
from .pooling import PoolConfig, VirtualPoints, build_index, pool_fast, select_valid

__all__ = ["BenchRow", "make_bench_points", "time_run", "bench_pooling", "jit_enabled"]

WARMUP_RUNS = 3
TIMED_RUNS = 11


def jit_enabled() -> bool:
    """False when the jitted kernel is disabled (pure-Python fallback), in
    which case timings are not representative of an optimized build."""
    return os.environ.get("NUMBA_DISABLE_JIT", "0") not in ("1", "true", "True")


@dataclass(frozen=True)
class BenchRow:
    n_points: int
    valid_fraction: float
    median_seconds: float
    points_per_second: float
    speedup_vs_full: float


def make_bench_points(n, fraction, cfg: PoolConfig, rng) -> VirtualPoints:
    """Synthetic in-range points of which exactly round(fraction * n)
    survive the config's thresholds.

    Chosen points get semantic score 1, the rest 0; depth scores sit above
    the depth threshold for everyone, so the semantic threshold alone
    decides (requires 0 < t_semantic <= 1).
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if not 0.0 < cfg.t_semantic <= 1.0:
        raise ValueError("forcing a fraction needs t_semantic in (0, 1]")
    gen = np.random.default_rng(rng)
    bev = cfg.bev
    lo = np.array([bev.x_range[0], bev.y_range[0], bev.z_range[0]])
    hi = np.array([bev.x_range[1], bev.y_range[1], bev.z_range[1]])
    span = hi - lo
    positions = lo + gen.random((n, 3)) * span * 0.999
    depth_floor = min(max(cfg.t_depth, 0.0) + 1e-3, 1.0)
    depth_scores = gen.uniform(depth_floor, 1.0, n).astype(np.float32)
    semantic = np.zeros(n, dtype=np.float32)
    k = int(round(fraction * n))
    if k:
        semantic[gen.choice(n, size=k, replace=False)] = 1.0
    feats = gen.standard_normal((n, bev.channels)).astype(np.float32)
    return VirtualPoints(
        positions=positions,
        cam_ids=np.zeros(n, dtype=np.int32),
        pixel_rows=np.zeros(n, dtype=np.int32),
        pixel_cols=np.zeros(n, dtype=np.int32),
        depth_bins=np.zeros(n, dtype=np.int32),
        depth_scores=depth_scores,
        semantic_scores=semantic,
        features=feats,
    )


def time_run(fn, warmup=WARMUP_RUNS, repeats=TIMED_RUNS) -> float:
    """Median wall time of ``fn()`` over ``repeats`` runs after warmups."""
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def _fast_path(points, cfg):
    valid = select_valid(points, cfg)
    index = build_index(valid, cfg)
    return pool_fast(index, valid, cfg)


def bench_pooling(cfg: PoolConfig, point_counts, fractions, rng=0,
                  warmup=WARMUP_RUNS, repeats=TIMED_RUNS):
    """Time the filter+index+pool path for every (n, fraction) pair.

    A fraction-1.0 baseline is always included so each row reports its
    speedup against pooling everything. Returns a list of BenchRow.
    """
    fracs = sorted({float(f) for f in fractions} | {1.0}, reverse=True)
    rows = []
    for n in point_counts:
        points = make_bench_points(int(n), 1.0, cfg, rng)
        base_time = None
        for f in fracs:
            if f != 1.0:
                points_f = make_bench_points(int(n), f, cfg, rng)
            else:
                points_f = points
            median = time_run(lambda: _fast_path(points_f, cfg), warmup, repeats)
            if f == 1.0:
                base_time = median
            rows.append(BenchRow(
                n_points=int(n),
                valid_fraction=f,
                median_seconds=median,
                points_per_second=int(n) / median if median > 0 else float("inf"),
                speedup_vs_full=base_time / median if median > 0 else float("inf"),
            ))
    return rows


def format_report(rows, jit_on=None) -> str:
    jit_on = jit_enabled() if jit_on is None else jit_on
    lines = []
    if not jit_on:
        lines.append("warning: jit disabled, timings are not representative")
    lines.append(f"{'points':>10} {'fraction':>9} {'median_s':>12} {'points/s':>14} {'speedup':>9}")
    for r in rows:
        lines.append(f"{r.n_points:>10d} {r.valid_fraction:>9.4f} {r.median_seconds:>12.6f} "
                     f"{r.points_per_second:>14.0f} {r.speedup_vs_full:>9.2f}")
    return "\n".join(lines) + "\n"
