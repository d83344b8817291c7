"""Parameter trees and the Adam optimizer.

Module parameters are plain dataclasses holding tensors (possibly in lists).
``named_tensors`` walks such a tree; ``replace_tensors`` rebuilds it with new
tensors, leaving the original untouched.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .tensor import Tensor


def named_tensors(tree, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    if isinstance(tree, Tensor):
        yield prefix, tree
    elif dataclasses.is_dataclass(tree):
        for f in dataclasses.fields(tree):
            yield from named_tensors(getattr(tree, f.name), f"{prefix}.{f.name}" if prefix else f.name)
    elif isinstance(tree, (list, tuple)):
        for i, item in enumerate(tree):
            yield from named_tensors(item, f"{prefix}.{i}")


def replace_tensors(tree, new: dict[str, Tensor], prefix: str = ""):
    if isinstance(tree, Tensor):
        return new.get(prefix, tree)
    if dataclasses.is_dataclass(tree):
        changes = {f.name: replace_tensors(getattr(tree, f.name), new, f"{prefix}.{f.name}" if prefix else f.name)
                   for f in dataclasses.fields(tree)}
        return dataclasses.replace(tree, **changes)
    if isinstance(tree, list):
        return [replace_tensors(item, new, f"{prefix}.{i}") for i, item in enumerate(tree)]
    if isinstance(tree, tuple):
        return tuple(replace_tensors(item, new, f"{prefix}.{i}") for i, item in enumerate(tree))
    return tree


@dataclass
class Adam:
    lr: float = 3.5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, tree, grads: dict[int, Tensor]):
        """Return ``tree`` with every tracked tensor moved one Adam step."""
        self.t += 1
        if self.lr == 0:
            return tree
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        updated = {}
        for name, p in named_tensors(tree):
            if not p.requires_grad or p.node_id not in grads:
                continue
            g = grads[p.node_id].data
            m = self.m.get(name)
            v = self.v.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                v = self.v[name] = np.zeros_like(g)
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            step = m / denom
            step *= self.lr / c1
            updated[name] = Tensor((p.data - step).astype(p.dtype, copy=False), requires_grad=True)
        return replace_tensors(tree, updated)
