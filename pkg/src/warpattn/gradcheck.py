"""Central finite-difference audit of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .rng import SeededRng
from .tensor import NonFiniteError, Tensor, ValidationError, backward, debug_mode


class GradcheckError(RuntimeError):
    """The audited function produced a non-finite intermediate."""

    def __init__(self, op: str) -> None:
        self.op = op
        super().__init__(f"gradient audit failed: non-finite value in op '{op}'")


@dataclass
class GradcheckReport:
    max_rel_error: float
    input_index: int
    coordinate: tuple[int, ...]
    analytic: float
    numeric: float


def gradcheck_report(f: Callable[..., Tensor], point: Tensor | Sequence[Tensor], epsilon: float = 1e-5,
                     max_coords: int | None = None, seed: int = 0, floor: float = 1e-8) -> GradcheckReport:
    """Compare ``backward`` against central differences at every coordinate.

    ``f`` takes one tensor per entry of ``point`` and returns a scalar. With
    ``max_coords`` set, each input is probed at a seeded random subset of that
    many coordinates instead of all of them. ``floor`` bounds the denominator
    of the relative error so that near-zero gradients compare absolutely.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    points = [point] if isinstance(point, Tensor) else list(point)
    bases = [np.array(p.data, dtype=np.float64 if p.dtype == np.float64 else p.dtype) for p in points]

    try:
        with debug_mode(True):
            leaves = [Tensor(b, requires_grad=True) for b in bases]
            loss = f(*leaves)
            if loss.size != 1:
                raise ValidationError(f"gradcheck: function must return a scalar, got shape {loss.shape}")
            grads = backward(loss) if loss.requires_grad else {}
    except NonFiniteError as err:
        raise GradcheckError(err.op) from err

    def evaluate(i: int, flat_idx: int, delta: float) -> float:
        arrays = [b if j != i else b.copy() for j, b in enumerate(bases)]
        arrays[i].reshape(-1)[flat_idx] += delta
        try:
            with debug_mode(True):
                return float(f(*[Tensor(a) for a in arrays]).data.reshape(-1)[0])
        except NonFiniteError as err:
            raise GradcheckError(err.op) from err

    rng = SeededRng(seed)
    worst: GradcheckReport | None = None
    for i, (leaf, base) in enumerate(zip(leaves, bases)):
        g = grads.get(leaf.node_id)
        analytic_all = np.zeros(base.size) if g is None else g.data.reshape(-1).astype(np.float64)
        coords = np.arange(base.size)
        if max_coords is not None and base.size > max_coords:
            coords = np.sort(np.argsort(rng.uniform((base.size,)))[:max_coords])
        for flat_idx in coords:
            numeric = (evaluate(i, flat_idx, epsilon) - evaluate(i, flat_idx, -epsilon)) / (2 * epsilon)
            analytic = analytic_all[flat_idx]
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            if worst is None or rel > worst.max_rel_error:
                coord = tuple(int(v) for v in np.unravel_index(flat_idx, base.shape))
                worst = GradcheckReport(rel, i, coord, float(analytic), float(numeric))
    return worst


def gradcheck(f: Callable[..., Tensor], point: Tensor | Sequence[Tensor], epsilon: float = 1e-5,
              max_coords: int | None = None, seed: int = 0, floor: float = 1e-8) -> float:
    """Maximum relative error between analytic and central-difference gradients."""
    return gradcheck_report(f, point, epsilon, max_coords=max_coords, seed=seed, floor=floor).max_rel_error
