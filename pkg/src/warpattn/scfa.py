"""Cross attention between warped-garment and person features, and the shallow decoder.

The weight matrices are (HW) x (HW): row ``i`` is a softmax over positions of
the other stream. Attending applies them as a matrix to the position-major
features (``A = W @ F``), which reduces to per-position scaling when ``W`` is
diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .pyramid import NEG_SLOPE, uniform_kernel
from .rng import SeededRng
from .tensor import (Tensor, ValidationError, add, concat, conv2d, leaky_relu, matmul, mul, reshape, scale,
                     softmax_rows, tanh, transpose2d)
from .warp import upsample2x


@dataclass
class SCFAParams:
    embed_garment: Tensor   # E x C x 1 x 1
    embed_person: Tensor    # E x C x 1 x 1
    decoder1: Tensor        # hidden x (2C [+ skip]) x 3 x 3  (C for summation fusion)
    decoder2: Tensor        # 3 x hidden x 3 x 3


def init_scfa(rng: SeededRng, channels: int, embed: int = 32, hidden: int = 64, skip_channels: int = 0,
              fusion: str = "concat", dtype="f64") -> SCFAParams:
    dec_in = 2 * channels if fusion == "concat" else channels
    return SCFAParams(
        embed_garment=uniform_kernel(rng, embed, channels, 1, dtype),
        embed_person=uniform_kernel(rng, embed, channels, 1, dtype),
        decoder1=uniform_kernel(rng, hidden, dec_in + skip_channels, 3, dtype),
        decoder2=uniform_kernel(rng, 3, hidden, 3, dtype),
    )


def _flat(x: Tensor) -> Tensor:
    c, h, w = x.shape
    return transpose2d(reshape(x, (c, h * w)))


def scfa_attention_weights(e_query: Tensor, e_key: Tensor) -> Tensor:
    """softmax_rows(Eq_flat @ Ek_flat^T / sqrt(C)) over flattened positions."""
    if e_query.shape != e_key.shape or e_query.ndim != 3:
        raise ValidationError(f"embedding shapes differ: {e_query.shape} vs {e_key.shape}")
    c = e_query.shape[0]
    return softmax_rows(matmul(_flat(e_query), transpose2d(_flat(e_key))), math.sqrt(c))


def scfa_attend(weights: Tensor, features: Tensor) -> Tensor:
    c, h, w = features.shape
    if weights.shape != (h * w, h * w):
        raise ValidationError(f"weights {weights.shape} do not fit {h * w} positions")
    return reshape(transpose2d(matmul(weights, _flat(features))), (c, h, w))


def decode(x: Tensor, params: SCFAParams, skip: Tensor | None = None) -> Tensor:
    """Two 3x3 convolutions, leaky ReLU between, output mapped to [0, 1] by (tanh + 1) / 2.

    With ``skip`` (full-resolution images), the features are upsampled 2x and
    concatenated with it, so both convolutions run at full resolution.
    """
    if skip is not None:
        x = upsample2x(x)
        if skip.shape[1:] != x.shape[1:]:
            raise ValidationError(f"skip images {skip.shape} do not match upsampled features {x.shape}")
        x = concat([x, skip], axis=0)
    hidden = leaky_relu(conv2d(x, params.decoder1, 1, 1), NEG_SLOPE)
    z = conv2d(hidden, params.decoder2, 1, 1)
    return scale(add(tanh(z), 1.0), 0.5)


def scfa_fuse(f_garment: Tensor, f_person: Tensor, params: SCFAParams,
              combine: str = "concat", residual: bool = False) -> tuple[Tensor, Tensor, Tensor]:
    """Attention-guided features; returns (fused, A_garment, A_person).

    With ``residual`` each read-out is added to its own input features,
    ``F + W @ F``, so positions keep their local content.
    """
    if f_garment.shape != f_person.shape:
        raise ValidationError(f"garment {f_garment.shape} and person {f_person.shape} features differ")
    e_garment = conv2d(f_garment, params.embed_garment)
    e_person = conv2d(f_person, params.embed_person)
    w_person = scfa_attention_weights(e_garment, e_person)
    w_garment = scfa_attention_weights(e_person, e_garment)
    a_person = scfa_attend(w_person, f_person)
    a_garment = scfa_attend(w_garment, f_garment)
    if residual:
        a_person = add(a_person, f_person)
        a_garment = add(a_garment, f_garment)
    if combine == "concat":
        fused = concat([a_garment, a_person], axis=0)
    elif combine == "product":
        fused = mul(a_garment, a_person)
    else:
        raise ValidationError(f"unknown combine mode {combine!r}")
    return fused, a_garment, a_person


def scfa_fuse_and_decode(f_garment: Tensor, f_person: Tensor, params: SCFAParams,
                         skip: Tensor | None = None, combine: str = "concat", residual: bool = False) -> Tensor:
    fused, _, _ = scfa_fuse(f_garment, f_person, params, combine, residual)
    return decode(fused, params, skip)


def sum_fuse_and_decode(f_garment: Tensor, f_person: Tensor, params: SCFAParams,
                        skip: Tensor | None = None) -> Tensor:
    """Ablation path: pixel-wise feature sum straight into the decoder."""
    if f_garment.shape != f_person.shape:
        raise ValidationError(f"garment {f_garment.shape} and person {f_person.shape} features differ")
    return decode(add(f_garment, f_person), params, skip)
