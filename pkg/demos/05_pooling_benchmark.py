"""What filtering buys at pooling time.

Filtering happens before the expensive work: the gather/sort/accumulate
pipeline only ever touches surviving points, so a 1.8% valid fraction cuts
the pooled workload by ~55x. This script times the end-to-end fast path
(filter + index + pool) across point counts and forced valid fractions
with the package's median-of-11 harness.
"""

from sembev import BevConfig, PoolConfig
from sembev.bench import bench_pooling, format_report, jit_enabled

if not jit_enabled():
    print("note: the jitted kernel is disabled; numbers will not be representative")

cfg = PoolConfig(bev=BevConfig(channels=64), t_depth=0.0085, t_semantic=0.25)

rows = bench_pooling(cfg, point_counts=[100_000, 1_000_000],
                     fractions=[0.018, 0.1, 1.0], rng=0)
print(format_report(rows), end="")

best = max(rows, key=lambda r: r.speedup_vs_full)
print(f"\nbest observed speedup vs pooling everything: {best.speedup_vs_full:.1f}x "
      f"at n={best.n_points}, fraction={best.valid_fraction}")
