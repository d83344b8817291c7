"""Deterministic PCG32 random stream.

Every random draw in the package goes through :class:`SeededRng` so a single
integer seed reproduces weights, synthetic samples and benchmark inputs on any
platform. The generator is the standard PCG32 (XSH-RR output, 64-bit LCG
state); blocks of outputs are produced with numpy by LCG jump-ahead rather
than a Python loop.
"""

from __future__ import annotations

import numpy as np

_MULT = np.uint64(6364136223846793005)
_MASK64 = (1 << 64) - 1


def _lcg_jump_tables(count: int, inc: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (A, C) such that state_i = A[i] * state_0 + C[i] (mod 2**64)."""
    a = np.ones(1, dtype=np.uint64)
    c = np.zeros(1, dtype=np.uint64)
    step_a, step_c = int(_MULT), inc
    n = 1
    with np.errstate(over="ignore"):
        while n < count:
            sa, sc = np.uint64(step_a), np.uint64(step_c)
            a = np.concatenate([a, a * sa])
            c = np.concatenate([c, c * sa + sc])
            n *= 2
            # compose the step with itself: x -> sa*(sa*x + sc) + sc
            step_c = (step_a * step_c + step_c) & _MASK64
            step_a = (step_a * step_a) & _MASK64
    return a[:count], c[:count]


def _output(states: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        xorshifted = (((states >> np.uint64(18)) ^ states) >> np.uint64(27)).astype(np.uint32)
        rot = (states >> np.uint64(59)).astype(np.uint32)
        left = (np.uint32(32) - rot) & np.uint32(31)
        return (xorshifted >> rot) | (xorshifted << left)


class SeededRng:
    """PCG32 stream seeded with a 64-bit integer.

    ``seq`` selects one of 2**63 independent streams; the default matches the
    reference ``pcg32_srandom(seed, 54)`` demo so outputs can be compared with
    the published test vector.
    """

    def __init__(self, seed: int, seq: int = 54) -> None:
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = seed
        self._inc = ((seq << 1) | 1) & _MASK64
        self._state = 0
        self._step()
        self._state = (self._state + seed) & _MASK64
        self._step()

    def _step(self) -> None:
        self._state = (self._state * int(_MULT) + self._inc) & _MASK64

    def next_u32(self, count: int) -> np.ndarray:
        """Draw ``count`` raw 32-bit outputs."""
        if count <= 0:
            return np.zeros(0, dtype=np.uint32)
        a, c = _lcg_jump_tables(count, self._inc)
        with np.errstate(over="ignore"):
            states = a * np.uint64(self._state) + c
        # advance past the block: the last emitted state, stepped once more
        self._state = int(states[-1])
        self._step()
        return _output(states)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Float64 draws in [low, high) with 53 bits of mantissa."""
        shape = tuple(np.atleast_1d(shape).tolist()) if not isinstance(shape, tuple) else shape
        n = int(np.prod(shape, dtype=np.int64))
        raw = self.next_u32(2 * n).astype(np.uint64).reshape(-1, 2) if n else np.zeros((0, 2), np.uint64)
        hi = raw[:, 0] >> np.uint64(5)
        lo = raw[:, 1] >> np.uint64(6)
        u = (hi.astype(np.float64) * 67108864.0 + lo.astype(np.float64)) / 9007199254740992.0
        return (low + (high - low) * u).reshape(shape)

    def normal(self, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """Box-Muller normal draws."""
        shape = tuple(shape) if isinstance(shape, (tuple, list)) else (int(shape),)
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        u1 = self.uniform((m,))
        u2 = self.uniform((m,))
        r = np.sqrt(-2.0 * np.log1p(-u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:n]
        return (mean + std * z).reshape(shape)

    def spawn(self, tag: int) -> "SeededRng":
        """Independent child stream derived from this seed and an integer tag."""
        return SeededRng(self.seed, seq=(tag * 2654435761 + 7) & ((1 << 63) - 1))
