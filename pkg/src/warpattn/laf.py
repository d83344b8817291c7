"""Linear attention flow block.

``linear_attention`` projects keys and values from n rows down to k rows with
learned n x k matrices before the softmax, so the attention map is n x k
instead of n x n. ``dense_attention`` is the quadratic form it replaces and
doubles as its oracle. ``estimate_flow_at_scale`` turns attention output into
K candidate flows plus K fusion logits, added residually to the upsampled
flows of the coarser scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pyramid import NEG_SLOPE, uniform_kernel
from .rng import SeededRng
from .tensor import (Tensor, ValidationError, add, concat, conv2d, getitem, leaky_relu, matmul, reshape,
                     softmax_rows, transpose2d)
from .warp import FlowStack

DTYPE_BYTES = {"f32": 4, "f64": 8}


@dataclass
class LinearAttentionParams:
    w_q: list[Tensor]   # per head, d x d_k
    w_k: list[Tensor]
    w_v: list[Tensor]
    e: list[Tensor]     # per head, n x k
    f: list[Tensor]
    w_o: Tensor         # d x d

    @property
    def heads(self) -> int:
        return len(self.w_q)

    @property
    def d(self) -> int:
        return self.w_o.shape[1]

    @property
    def d_k(self) -> int:
        return self.w_q[0].shape[1]

    @property
    def n(self) -> int:
        return self.e[0].shape[0]

    @property
    def k(self) -> int:
        return self.e[0].shape[1]


@dataclass
class FlowHeadParams:
    hidden: Tensor   # (2C) -> hidden, 3x3
    out: Tensor      # hidden -> 3K, 3x3

    @property
    def k(self) -> int:
        return self.out.shape[0] // 3


def init_linear_attention(rng: SeededRng, n: int, d: int, k: int, heads: int = 1, dtype="f64",
                          requires_grad: bool = True) -> LinearAttentionParams:
    if d % heads:
        raise ValidationError(f"model dim {d} is not divisible by {heads} heads")
    if not 1 <= k <= n:
        raise ValidationError(f"projected dim k={k} must lie in [1, n={n}]")
    d_k = d // heads

    def mat(rows, cols, fan_in):
        bound = math.sqrt(1.0 / fan_in)
        return Tensor(rng.uniform((rows, cols), -bound, bound), dtype=dtype, requires_grad=requires_grad)

    return LinearAttentionParams(
        w_q=[mat(d, d_k, d) for _ in range(heads)],
        w_k=[mat(d, d_k, d) for _ in range(heads)],
        w_v=[mat(d, d_k, d) for _ in range(heads)],
        e=[mat(n, k, n) for _ in range(heads)],
        f=[mat(n, k, n) for _ in range(heads)],
        w_o=mat(d, d, d),
    )


def _check_inputs(q: Tensor, k: Tensor, v: Tensor, params: LinearAttentionParams) -> None:
    if not (q.ndim == k.ndim == v.ndim == 2) or k.shape != v.shape or q.shape[1] != k.shape[1]:
        raise ValidationError(f"attention inputs must be n x d matrices, got {q.shape}, {k.shape}, {v.shape}")
    if q.shape[1] != params.d:
        raise ValidationError(f"attention inputs have d={q.shape[1]}, params expect d={params.d}")


def linear_attention(q_in: Tensor, k_in: Tensor, v_in: Tensor, params: LinearAttentionParams) -> Tensor:
    """Low-rank attention: softmax(Q Wq (E^T K Wk)^T / sqrt(d_k)) (F^T V Wv), heads mixed by W_O."""
    _check_inputs(q_in, k_in, v_in, params)
    if k_in.shape[0] != params.n:
        raise ValidationError(
            f"attention has n={k_in.shape[0]} rows but projections were sized for n={params.n}")
    scale = math.sqrt(params.d_k)
    heads = []
    for i in range(params.heads):
        q = matmul(q_in, params.w_q[i])
        k_proj = matmul(transpose2d(params.e[i]), matmul(k_in, params.w_k[i]))    # k x d_k
        v_proj = matmul(transpose2d(params.f[i]), matmul(v_in, params.w_v[i]))    # k x d_k
        context = softmax_rows(matmul(q, transpose2d(k_proj)), scale)              # n x k
        heads.append(matmul(context, v_proj))
    merged = heads[0] if len(heads) == 1 else concat(heads, axis=1)
    return matmul(merged, params.w_o)


def dense_attention(q_in: Tensor, k_in: Tensor, v_in: Tensor, params: LinearAttentionParams) -> Tensor:
    """Quadratic attention with the same Q/K/V/O weights; E and F are ignored."""
    _check_inputs(q_in, k_in, v_in, params)
    scale = math.sqrt(params.d_k)
    heads = []
    for i in range(params.heads):
        q = matmul(q_in, params.w_q[i])
        k = matmul(k_in, params.w_k[i])
        v = matmul(v_in, params.w_v[i])
        heads.append(matmul(softmax_rows(matmul(q, transpose2d(k)), scale), v))
    merged = heads[0] if len(heads) == 1 else concat(heads, axis=1)
    return matmul(merged, params.w_o)


def attention_memory_estimate(n: int, k: int, h: int, dtype: str = "f32", variant: str = "linear") -> int:
    """Bytes held by the attention map: h*n*k (linear) or h*n*n (dense) scalars."""
    if min(n, k, h) <= 0:
        raise ValidationError("n, k and h must be positive")
    cols = k if variant == "linear" else n
    return h * n * cols * DTYPE_BYTES[dtype]


def init_flow_head(rng: SeededRng, channels: int, candidates: int, hidden: int = 32, dtype="f64",
                   out_init: str = "small", out_gain: float = 0.1) -> FlowHeadParams:
    """Head reading the attention output concatenated with the query features."""
    hidden_k = uniform_kernel(rng, hidden, 2 * channels, 3, dtype)
    if out_init == "zero":
        out = Tensor(np.zeros((3 * candidates, hidden, 3, 3)), dtype=dtype, requires_grad=True)
    else:
        out = uniform_kernel(rng, 3 * candidates, hidden, 3, dtype, gain=out_gain)
    return FlowHeadParams(hidden_k, out)


def flatten_positions(feat: Tensor) -> Tensor:
    """C x H x W features to an (H*W) x C matrix, one row per position."""
    c, h, w = feat.shape
    return transpose2d(reshape(feat, (c, h * w)))


def unflatten_positions(rows: Tensor, h: int, w: int) -> Tensor:
    return reshape(transpose2d(rows), (rows.shape[1], h, w))


def estimate_flow_at_scale(src_feat: Tensor, ref_feat: Tensor, prev: FlowStack | None,
                           attn: LinearAttentionParams, head: FlowHeadParams,
                           variant: str = "linear") -> FlowStack:
    """K candidate flows and logits at one scale, residual on ``prev``.

    ``prev`` must already be upsampled to this scale (see
    ``warp.upsample_flowstack``); ``None`` means zero flows and logits.
    Queries come from the reference (person) features, keys and values from
    the source (garment) features.
    """
    if src_feat.shape != ref_feat.shape:
        raise ValidationError(f"source {src_feat.shape} and reference {ref_feat.shape} features differ")
    c, h, w = src_feat.shape
    if variant == "linear" and attn.n != h * w:
        raise ValidationError(f"scale has n={h * w} positions but projections were sized for n={attn.n}")
    q = flatten_positions(ref_feat)
    kv = flatten_positions(src_feat)
    attend = linear_attention if variant == "linear" else dense_attention
    attended = unflatten_positions(attend(q, kv, kv, attn), h, w)
    hidden = leaky_relu(conv2d(concat([attended, ref_feat], axis=0), head.hidden, 1, 1), NEG_SLOPE)
    raw = conv2d(hidden, head.out, 1, 1)
    kk = head.k
    if prev is not None:
        if prev.k != kk or prev.spatial != (h, w):
            raise ValidationError(
                f"previous flow stack ({prev.k} flows at {prev.spatial}) does not fit scale ({kk} at {(h, w)})")
    flows, logits = [], getitem(raw, slice(2 * kk, 3 * kk))
    for i in range(kk):
        flow = getitem(raw, slice(2 * i, 2 * i + 2))
        flows.append(flow if prev is None else add(prev.flows[i], flow))
    if prev is not None:
        logits = add(prev.logits, logits)
    return FlowStack(flows, logits)
