"""Timing and peak-allocation benchmark of linear vs dense attention."""

from __future__ import annotations

import hashlib
import statistics
import time
import tracemalloc
from dataclasses import dataclass
from typing import Iterable

from .laf import attention_memory_estimate, dense_attention, init_linear_attention, linear_attention
from .rng import SeededRng
from .tensor import Tensor, ValidationError, benchmark_mode

REPEATS = 5
SKIPPED = "skipped: memory"
DEFAULT_MEMORY_LIMIT = 2 * 1024 ** 3


@dataclass
class BenchRecord:
    variant: str
    n: int
    k: int
    h: int
    wall_ns: int | None      # median of REPEATS timed runs, None when skipped
    peak_bytes: int | None   # peak transient allocation of one call
    map_bytes: int           # attention-map size from attention_memory_estimate
    output_hash: str = ""

    @property
    def skipped(self) -> bool:
        return self.wall_ns is None

    def line(self) -> str:
        if self.skipped:
            return f"{self.variant}\t{self.n}\t{self.k}\t{self.h}\t{SKIPPED}\t{SKIPPED}"
        return f"{self.variant}\t{self.n}\t{self.k}\t{self.h}\t{self.wall_ns}\t{self.peak_bytes}"


def _peak_allocation(fn) -> tuple[int, object]:
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        base = tracemalloc.get_traced_memory()[0]
        out = fn()
        peak = tracemalloc.get_traced_memory()[1] - base
    finally:
        tracemalloc.stop()
    return peak, out


def bench_attention(n_list: Iterable[int], k: int = 64, h: int = 1, dtype: str = "f32", d: int = 64,
                    seed: int = 42, repeats: int = REPEATS,
                    memory_limit: int = DEFAULT_MEMORY_LIMIT) -> list[BenchRecord]:
    """Run both attention variants at each n; dense runs whose map would exceed ``memory_limit`` are skipped."""
    n_list = [int(n) for n in n_list]
    if n_list != sorted(n_list) or min(n_list, default=0) < 1:
        raise ValidationError(f"n list must be sorted positive integers, got {n_list}")
    if k < 1 or h < 1:
        raise ValidationError(f"k and heads must be positive, got k={k}, h={h}")
    records = []
    with benchmark_mode():
        for n in n_list:
            rng = SeededRng(seed).spawn(n)
            params = init_linear_attention(rng, n, d, min(k, n), h, dtype, requires_grad=False)
            x = Tensor(rng.uniform((n, d), -1, 1), dtype=dtype)
            for variant, fn in (("linear", linear_attention), ("dense", dense_attention)):
                map_bytes = attention_memory_estimate(n, min(k, n), h, dtype, variant)
                if variant == "dense" and 4 * map_bytes > memory_limit:
                    records.append(BenchRecord(variant, n, k, h, None, None, map_bytes))
                    continue
                fn(x, x, x, params)  # warm-up
                times = []
                for _ in range(repeats):
                    t0 = time.perf_counter_ns()
                    out = fn(x, x, x, params)
                    times.append(time.perf_counter_ns() - t0)
                peak, out = _peak_allocation(lambda: fn(x, x, x, params))
                digest = hashlib.sha256(out.data.tobytes()).hexdigest()[:16]
                records.append(BenchRecord(variant, n, k, h, int(statistics.median(times)), peak,
                                           map_bytes, digest))
    return records
