"""Backward bilinear warping, softmax fusion of candidate warps, flow upsampling.

Flows are absolute pixel displacements: channel 0 horizontal (+ right),
channel 1 vertical (+ down), and ``out(p) = input(p + flow(p))``. Source
coordinates are clamped to the image border.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor import (BACKWARD_RULES, Tensor, ValidationError, add, broadcast_channels, getitem, make_result,
                     mul, reshape, resample, scale, softmax_rows, transpose2d)


@dataclass
class FlowStack:
    flows: list[Tensor]   # K tensors of shape 2 x H x W
    logits: Tensor        # K x H x W

    @property
    def k(self) -> int:
        return len(self.flows)

    @property
    def spatial(self) -> tuple[int, int]:
        return self.logits.shape[1:]

    def __post_init__(self) -> None:
        if not self.flows:
            raise ValidationError("a flow stack needs at least one flow")
        if self.logits.ndim != 3 or self.logits.shape[0] != len(self.flows):
            raise ValidationError(f"logits shape {self.logits.shape} does not match {len(self.flows)} flows")
        for f in self.flows:
            if f.shape != (2,) + self.logits.shape[1:]:
                raise ValidationError(f"flow shape {f.shape} does not match logits {self.logits.shape}")


def _sample_coords(flow: np.ndarray):
    _, h, w = flow.shape
    gy, gx = np.mgrid[0:h, 0:w]
    x = gx + flow[0]
    y = gy + flow[1]
    xc = np.clip(x, 0, w - 1)
    yc = np.clip(y, 0, h - 1)
    # floor picks the right-hand cell at exact integers; the last cell is reused at the border
    x0 = np.minimum(np.floor(xc), max(w - 2, 0)).astype(np.int64)
    y0 = np.minimum(np.floor(yc), max(h - 2, 0)).astype(np.int64)
    wx = (xc - x0).astype(flow.dtype)
    wy = (yc - y0).astype(flow.dtype)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    inside_x = (x >= 0) & (x <= w - 1)
    inside_y = (y >= 0) & (y <= h - 1)
    return x0, x1, y0, y1, wx, wy, inside_x, inside_y


def bilinear_sample(x: Tensor, flow: Tensor) -> Tensor:
    """Read ``x`` at ``p + flow(p)`` for every pixel with bilinear interpolation."""
    if x.ndim != 3 or flow.ndim != 3 or flow.shape[0] != 2 or flow.shape[1:] != x.shape[1:]:
        raise ValidationError(f"bilinear_sample: flow {flow.shape} does not match input {x.shape}")
    if x.dtype != flow.dtype:
        raise ValidationError(f"bilinear_sample: dtype mismatch {x.dtype} vs {flow.dtype}")
    c, h, w = x.shape
    x0, x1, y0, y1, wx, wy, inside_x, inside_y = _sample_coords(flow.data)
    flat = x.data.reshape(c, h * w)
    i00, i01, i10, i11 = y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1
    v00, v01, v10, v11 = flat[:, i00], flat[:, i01], flat[:, i10], flat[:, i11]
    out = (v00 * ((1 - wx) * (1 - wy)) + v01 * (wx * (1 - wy))
           + v10 * ((1 - wx) * wy) + v11 * (wx * wy))
    return make_result(out, "bilinear_sample", (x, flow),
                       idx=(i00, i01, i10, i11), wx=wx, wy=wy, inside=(inside_x, inside_y),
                       corners=(v00, v01, v10, v11) if flow.requires_grad else None)


def _bilinear_back(node, g):
    x, flow = node.parents
    c, h, w = x.shape
    i00, i01, i10, i11 = node.saved["idx"]
    wx, wy = node.saved["wx"], node.saved["wy"]
    dx = dflow = None
    if x.requires_grad:
        offsets = (np.arange(c) * (h * w))[:, None, None]
        acc = np.zeros(c * h * w, dtype=g.dtype)
        for idx, wt in ((i00, (1 - wx) * (1 - wy)), (i01, wx * (1 - wy)),
                        (i10, (1 - wx) * wy), (i11, wx * wy)):
            acc += np.bincount((idx[None] + offsets).ravel(), weights=(g * wt).ravel(),
                               minlength=c * h * w).astype(g.dtype, copy=False)
        dx = acc.reshape(c, h, w)
    if flow.requires_grad:
        v00, v01, v10, v11 = node.saved["corners"]
        inside_x, inside_y = node.saved["inside"]
        d_wx = (v01 - v00) * (1 - wy) + (v11 - v10) * wy
        d_wy = (v10 - v00) * (1 - wx) + (v11 - v01) * wx
        dflow = np.stack([(g * d_wx).sum(axis=0) * inside_x, (g * d_wy).sum(axis=0) * inside_y])
        dflow = dflow.astype(g.dtype, copy=False)
    return dx, dflow


BACKWARD_RULES["bilinear_sample"] = _bilinear_back


def fusion_weights(logits: Tensor) -> Tensor:
    """Per-pixel softmax over the K logit channels, returned as K x H x W."""
    k, h, w = logits.shape
    per_pixel = transpose2d(reshape(logits, (k, h * w)))
    return reshape(transpose2d(softmax_rows(per_pixel, 1.0)), (k, h, w))


def fuse_warps(x: Tensor, stack: FlowStack) -> Tensor:
    """Softmax-weighted sum of ``x`` warped by each candidate flow."""
    if stack.spatial != x.shape[1:]:
        raise ValidationError(f"fuse_warps: flow stack {stack.spatial} does not match input {x.shape}")
    c = x.shape[0]
    weights = fusion_weights(stack.logits)
    out = None
    for k, flow in enumerate(stack.flows):
        wk = broadcast_channels(getitem(weights, slice(k, k + 1)), c)
        term = mul(wk, bilinear_sample(x, flow))
        out = term if out is None else add(out, term)
    return out


@lru_cache(maxsize=None)
def upsample_matrix(n: int, factor: int = 2) -> np.ndarray:
    """(factor*n) x n bilinear interpolation matrix, half-pixel centres, edge clamp."""
    m = np.zeros((factor * n, n))
    for i in range(factor * n):
        src = min(max((i + 0.5) / factor - 0.5, 0.0), n - 1)
        i0 = int(np.floor(src))
        t = src - i0
        m[i, i0] += 1 - t
        if t > 0:
            m[i, min(i0 + 1, n - 1)] += t
    m.flags.writeable = False
    return m


@lru_cache(maxsize=None)
def area_matrix(n: int, factor: int) -> np.ndarray:
    """(n/factor) x n block-averaging matrix."""
    if n % factor:
        raise ValidationError(f"size {n} is not divisible by {factor}")
    m = np.zeros((n // factor, n))
    for i in range(n // factor):
        m[i, i * factor:(i + 1) * factor] = 1.0 / factor
    m.flags.writeable = False
    return m


def upsample2x(x: Tensor) -> Tensor:
    return resample(x, upsample_matrix(x.shape[1]), upsample_matrix(x.shape[2]))


def area_downsample(x: Tensor, factor: int) -> Tensor:
    if factor == 1:
        return x
    return resample(x, area_matrix(x.shape[1], factor), area_matrix(x.shape[2], factor))


def upsample_flowstack(stack: FlowStack) -> FlowStack:
    """Double the resolution; displacements double with it, logits do not."""
    flows = [scale(upsample2x(f), 2.0) for f in stack.flows]
    return FlowStack(flows, upsample2x(stack.logits))
