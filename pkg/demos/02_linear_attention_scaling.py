"""Linear (low-rank projected) attention against dense attention.

With full-rank identity projections the two agree to rounding; with k fixed
the linear variant's time and memory grow about linearly in n while the dense
n x n map grows quadratically.

Run: python demos/02_linear_attention_scaling.py
"""

import numpy as np

from warpattn.bench import bench_attention
from warpattn.laf import dense_attention, init_linear_attention, linear_attention
from warpattn.rng import SeededRng
from warpattn.tensor import Tensor

rng = SeededRng(7)
n, d = 16, 8
p = init_linear_attention(rng, n, d, k=n)
p.e, p.f = [Tensor(np.eye(n))], [Tensor(np.eye(n))]
q, k, v = (Tensor(rng.uniform((n, d), -1, 1)) for _ in range(3))
gap = np.abs(linear_attention(q, k, v, p).data - dense_attention(q, k, v, p).data).max()
print(f"identity projections, n={n}: max |linear - dense| = {gap:.1e}")

print("\nvariant   n     wall (ms)  peak (KiB)")
records = bench_attention([256, 512, 1024, 2048], k=64, repeats=3)
for r in records:
    print(f"{r.variant:<8} {r.n:5d}  {r.wall_ns / 1e6:9.2f}  {r.peak_bytes / 1024:10.0f}")

by = {(r.variant, r.n): r for r in records}
for variant in ("linear", "dense"):
    growth = [by[variant, 2 * m].peak_bytes / by[variant, m].peak_bytes for m in (256, 512, 1024)]
    print(f"{variant} memory growth per doubling of n:", " ".join(f"x{g:.2f}" for g in growth))
