"""Registry of gradient audits, one per differentiable op or composite function.

Each audit builds a small seeded f64 case, wraps it as a scalar function and
hands it to :func:`gradcheck_report`. Inputs are drawn away from the
non-smooth points of leaky ReLU, |x| and bilinear interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import laf, losses, pyramid, scfa, tensor as T, warp
from .gradcheck import GradcheckReport, gradcheck_report
from .rng import SeededRng

TOLERANCE = 1e-4
MODULES = ("tensor", "pyramid", "laf", "warp", "scfa", "losses", "pipeline")


@dataclass
class Audit:
    module: str
    name: str
    run: Callable[[int], GradcheckReport]


REGISTRY: list[Audit] = []


def audit(module: str, name: str):
    def register(fn):
        REGISTRY.append(Audit(module, name, fn))
        return fn
    return register


def _u(rng: SeededRng, shape, lo=-1.0, hi=1.0) -> T.Tensor:
    return T.Tensor(rng.uniform(shape, lo, hi))


def _off_lattice(rng: SeededRng, shape, amplitude: float) -> np.ndarray:
    """Displacements whose fractional part stays at least 0.1 px from an integer."""
    base = np.round(rng.uniform(shape, -amplitude, amplitude))
    return base + rng.uniform(shape, 0.15, 0.85)


def _away_from_zero(rng: SeededRng, shape, lo=0.2, hi=1.0) -> np.ndarray:
    sign = np.where(rng.uniform(shape) < 0.5, -1.0, 1.0)
    return sign * rng.uniform(shape, lo, hi)


def _weighted_sum(x: T.Tensor, w: np.ndarray) -> T.Tensor:
    """Scalar probe with non-uniform weights so every output element matters differently."""
    return T.sum(T.mul(x, T.Tensor(w.reshape(x.shape))))


def _probe(rng: SeededRng, shape) -> np.ndarray:
    return rng.uniform(shape, 0.5, 1.5)


# ------------------------------------------------------------------ tensor core

@audit("tensor", "matmul")
def _matmul(seed):
    rng = SeededRng(seed)
    w = _probe(rng, (4, 5))
    return gradcheck_report(lambda a, b: _weighted_sum(T.matmul(a, b), w), [_u(rng, (4, 3)), _u(rng, (3, 5))])


@audit("tensor", "softmax_rows")
def _softmax(seed):
    rng = SeededRng(seed)
    w = _probe(rng, (3, 4))
    return gradcheck_report(lambda x: _weighted_sum(T.softmax_rows(x, 1.7), w), _u(rng, (3, 4), -2, 2))


@audit("tensor", "conv2d")
def _conv(seed):
    rng = SeededRng(seed)
    w = _probe(rng, (3, 3, 3))
    return gradcheck_report(lambda x, k: _weighted_sum(T.conv2d(x, k, 2, 1), w),
                            [_u(rng, (2, 5, 5)), _u(rng, (3, 2, 3, 3))])


@audit("tensor", "elementwise")
def _elementwise(seed):
    rng = SeededRng(seed)
    w = _probe(rng, (2, 6))

    def f(a, b):
        x = T.add(T.mul(a, b), T.scale(T.sub(a, b), 0.7))
        x = T.leaky_relu(x, 0.1)
        x = T.tanh(T.concat([x, T.reshape(T.transpose2d(T.reshape(a, (3, 2))), (2, 3))], axis=1))
        return T.add(_weighted_sum(x, w), T.add(T.mean(a), T.sum_abs(b)))

    a = T.Tensor(_away_from_zero(rng, (2, 3), 0.6, 1.0))
    b = T.Tensor(_away_from_zero(rng, (2, 3), 0.2, 0.4))
    return gradcheck_report(f, [a, b])


@audit("tensor", "resample")
def _resample(seed):
    rng = SeededRng(seed)
    w = _probe(rng, (2, 8, 6))
    return gradcheck_report(lambda x: _weighted_sum(warp.upsample2x(x), w), _u(rng, (2, 4, 3)))


# ------------------------------------------------------------------ pyramid

@audit("pyramid", "extract")
def _pyramid(seed):
    rng = SeededRng(seed)
    params = pyramid.init_pyramid(2, rng, channels=(3, 4, 4, 3, 2))
    ks = [k for pair in params.kernels for k in pair]
    x = _u(rng, (2, 32, 32), 0, 1)

    def f(x, *kernels):
        p = pyramid.PyramidParams([(kernels[2 * i], kernels[2 * i + 1]) for i in range(5)],
                                  params.channels, params.stream, False, 2)
        return T.add(T.sum(pyramid.extract(x, p)[5]), T.scale(T.sum(pyramid.extract(x, p)[2]), 0.1))

    return gradcheck_report(f, [x] + ks, max_coords=12, seed=seed, floor=1e-6)


# ------------------------------------------------------------------ attention flow

def _attn_case(seed, n=6, d=4, k=3, heads=2):
    rng = SeededRng(seed)
    params = laf.init_linear_attention(rng, n, d, k, heads)
    tensors = params.w_q + params.w_k + params.w_v + params.e + params.f + [params.w_o]
    return rng, params, tensors


def _rebuild_attn(params, flat):
    h = params.heads
    return laf.LinearAttentionParams(list(flat[0:h]), list(flat[h:2 * h]), list(flat[2 * h:3 * h]),
                                     list(flat[3 * h:4 * h]), list(flat[4 * h:5 * h]), flat[5 * h])


@audit("laf", "linear_attention")
def _linear_attention(seed):
    rng, params, tensors = _attn_case(seed)
    q, kv = _u(rng, (6, 4)), _u(rng, (6, 4))
    w = _probe(rng, (6, 4))

    def f(q, kv, *flat):
        return _weighted_sum(laf.linear_attention(q, kv, kv, _rebuild_attn(params, flat)), w)

    return gradcheck_report(f, [q, kv] + tensors)


@audit("laf", "dense_attention")
def _dense_attention(seed):
    rng, params, tensors = _attn_case(seed)
    q, kv = _u(rng, (6, 4)), _u(rng, (6, 4))
    w = _probe(rng, (6, 4))

    def f(q, kv, *flat):
        return _weighted_sum(laf.dense_attention(q, kv, kv, _rebuild_attn(params, flat)), w)

    return gradcheck_report(f, [q, kv] + tensors)


@audit("laf", "estimate_flow_at_scale")
def _flow_at_scale(seed):
    rng = SeededRng(seed)
    c, h, w_ = 3, 4, 4
    attn = laf.init_linear_attention(rng, h * w_, c, 5, 1)
    head = laf.init_flow_head(rng, c, 2, hidden=4, out_gain=1.0)
    src, ref = _u(rng, (c, h, w_)), _u(rng, (c, h, w_))
    prev = warp.FlowStack([T.Tensor(_off_lattice(rng, (2, h, w_), 1)) for _ in range(2)], _u(rng, (2, h, w_)))
    probe = _probe(rng, (6, h, w_))

    def f(src, ref, hidden, out):
        stack = laf.estimate_flow_at_scale(src, ref, prev, attn, laf.FlowHeadParams(hidden, out))
        return _weighted_sum(T.concat(stack.flows + [stack.logits], axis=0), probe)

    return gradcheck_report(f, [src, ref, head.hidden, head.out], max_coords=40, seed=seed)


# ------------------------------------------------------------------ warping

@audit("warp", "bilinear_sample")
def _bilinear(seed):
    rng = SeededRng(seed)
    x = _u(rng, (2, 6, 7))
    flow = T.Tensor(_off_lattice(rng, (2, 6, 7), 2))
    w = _probe(rng, (2, 6, 7))
    return gradcheck_report(lambda x, f: _weighted_sum(warp.bilinear_sample(x, f), w), [x, flow])


@audit("warp", "fuse_warps")
def _fuse(seed):
    rng = SeededRng(seed)
    x = _u(rng, (2, 5, 6))
    flows = [T.Tensor(_off_lattice(rng, (2, 5, 6), 1)) for _ in range(3)]
    logits = _u(rng, (3, 5, 6), -2, 2)
    w = _probe(rng, (2, 5, 6))

    def f(x, f0, f1, f2, lg):
        return _weighted_sum(warp.fuse_warps(x, warp.FlowStack([f0, f1, f2], lg)), w)

    return gradcheck_report(f, [x] + flows + [logits])


@audit("warp", "upsample_flowstack")
def _upsample_stack(seed):
    rng = SeededRng(seed)
    flow, logits = _u(rng, (2, 3, 4)), _u(rng, (1, 3, 4))
    w = _probe(rng, (3, 6, 8))

    def f(fl, lg):
        s = warp.upsample_flowstack(warp.FlowStack([fl], lg))
        return _weighted_sum(T.concat([s.flows[0], s.logits], axis=0), w)

    return gradcheck_report(f, [flow, logits])


# ------------------------------------------------------------------ fusion attention

@audit("scfa", "scfa_attention_weights")
def _scfa_weights(seed):
    rng = SeededRng(seed)
    w = _probe(rng, (6, 6))
    return gradcheck_report(lambda a, b: _weighted_sum(scfa.scfa_attention_weights(a, b), w),
                            [_u(rng, (3, 2, 3)), _u(rng, (3, 2, 3))])


@audit("scfa", "scfa_attend")
def _scfa_attend(seed):
    rng = SeededRng(seed)
    weights = T.softmax_rows(_u(rng, (6, 6)))
    w = _probe(rng, (3, 2, 3))
    return gradcheck_report(lambda wt, f: _weighted_sum(scfa.scfa_attend(wt, f), w),
                            [weights, _u(rng, (3, 2, 3))])


@audit("scfa", "scfa_fuse_and_decode")
def _scfa_decode(seed):
    rng = SeededRng(seed)
    c = 3
    params = scfa.init_scfa(rng, c, embed=2, hidden=4)
    fg, fp = _u(rng, (c, 3, 3)), _u(rng, (c, 3, 3))
    w = _probe(rng, (3, 3, 3))

    def f(fg, fp, eg, ep, d1, d2):
        return _weighted_sum(scfa.scfa_fuse_and_decode(fg, fp, scfa.SCFAParams(eg, ep, d1, d2)), w)

    return gradcheck_report(f, [fg, fp, params.embed_garment, params.embed_person, params.decoder1,
                                params.decoder2], max_coords=30, seed=seed)


# ------------------------------------------------------------------ losses

def _phi(seed):
    return pyramid.init_pyramid(3, SeededRng(seed + 1000), channels=(3, 3, 3, 3, 3), frozen=True)


@audit("losses", "warp_loss")
def _warp_loss(seed):
    rng = SeededRng(seed)
    a = _u(rng, (3, 4, 4))
    b = T.Tensor(a.data + _away_from_zero(rng, (3, 4, 4), 0.05, 0.3))
    return gradcheck_report(lambda a: T.scale(losses.warp_loss(a, b), 48.0), a)


@audit("losses", "l1_total")
def _l1_total(seed):
    rng = SeededRng(seed)
    o, w = _u(rng, (3, 4, 4)), _u(rng, (3, 4, 4))
    gp = T.Tensor(o.data + _away_from_zero(rng, (3, 4, 4), 0.05, 0.3))
    wg = T.Tensor(w.data + _away_from_zero(rng, (3, 4, 4), 0.05, 0.3))
    return gradcheck_report(lambda o, w: T.scale(losses.l1_total(o, gp, w, wg), 48.0), [o, w])


@audit("losses", "perceptual_loss")
def _perceptual(seed):
    rng = SeededRng(seed)
    phi = _phi(seed)
    a, b = _u(rng, (3, 32, 32), 0, 1), _u(rng, (3, 32, 32), 0, 1)
    return gradcheck_report(lambda a: T.scale(losses.perceptual_loss(a, b, phi), 100.0), a,
                            max_coords=40, seed=seed)


@audit("losses", "style_loss")
def _style(seed):
    rng = SeededRng(seed)
    phi = _phi(seed)
    a, b = _u(rng, (3, 32, 32), 0, 1), _u(rng, (3, 32, 32), 0, 1)
    return gradcheck_report(lambda a: T.scale(losses.style_loss(a, b, phi), 1e4), a, max_coords=40, seed=seed)


@audit("losses", "total_loss")
def _total(seed):
    rng = SeededRng(seed)
    phi = _phi(seed)
    targets = [losses.ScaleTarget(_u(rng, (3, s, s), 0, 1), _u(rng, (3, s, s), 0, 1)) for s in (8, 16)]
    tryon = [_u(rng, (3, s, s), 0, 1) for s in (8, 16)]
    warped = [_u(rng, (3, s, s), 0, 1) for s in (8, 16)]

    def f(t0, t1, w0, w1):
        preds = [losses.ScalePrediction(t0, w0), losses.ScalePrediction(t1, w1)]
        return losses.total_loss(preds, targets, losses.LossWeights(), phi).total

    return gradcheck_report(f, tryon + warped, max_coords=25, seed=seed)


# ------------------------------------------------------------------ full pipeline

@audit("pipeline", "forward")
def _pipeline(seed):
    from .optim import named_tensors, replace_tensors
    from .pipeline import PipelineConfig, compute_loss, forward, init_params, scale_targets
    from .synth import synth_sample

    cfg = PipelineConfig(filters=(4, 4, 4, 4, 4), height=32, width=32, proj_dim=4, candidates=2, flow_hidden=4,
                         scfa_embed=4, decoder_hidden=4, seed=seed)
    params = init_params(cfg)
    sample = synth_sample(seed, 32, 32)
    targets = scale_targets(sample, params, cfg)
    names = [n for n, t in named_tensors(params) if t.requires_grad]
    picked = [n for n in names if n.startswith(("attention.0.w_q", "flow_heads.0.out", "scfa.decoder1",
                                                "source.kernels.0.0"))]
    tensors = dict(named_tensors(params))

    def f(*values):
        p = replace_tensors(params, dict(zip(picked, values)))
        return compute_loss(forward(sample, p, cfg), targets, p, cfg).total

    # deep compositions reach 1e-10 FD noise, so tiny gradients are compared absolutely
    return gradcheck_report(f, [tensors[n] for n in picked], max_coords=6, seed=seed, floor=1e-6)


def run_audits(module: str = "all", seed: int = 42) -> list[tuple[Audit, GradcheckReport]]:
    if module != "all" and module not in MODULES:
        raise ValueError(f"unknown module {module!r}; expected one of {', '.join(MODULES)} or all")
    selected = [a for a in REGISTRY if module == "all" or a.module == module]
    return [(a, a.run(seed)) for a in selected]
