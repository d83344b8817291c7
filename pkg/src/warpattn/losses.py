"""Joint warped-garment / try-on objective.

Every L1 term uses mean reduction. Perceptual and style terms compare features
from a frozen pyramid (``phi``); the style term compares Gram matrices
``G = F F^T / (C H W)`` of the flattened level features. The multi-scale total
weights scale ``n`` (1 = coarsest) by ``n + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .pyramid import FeaturePyramid, PyramidParams, pyramid_features
from .tensor import Tensor, ValidationError, add, matmul, mean_abs, reshape, scale, sub, transpose2d


@dataclass(frozen=True)
class LossWeights:
    lambda_l1: float = 1.0
    lambda_prec: float = 1.0
    lambda_style: float = 100.0

    def __post_init__(self) -> None:
        if min(self.lambda_l1, self.lambda_prec, self.lambda_style) < 0:
            raise ValidationError("loss weights must be nonnegative")


@dataclass
class ScaleLoss:
    scale: int
    l1: float
    warp: float
    perceptual: float
    style: float
    scale_weight: float


@dataclass
class LossReport:
    records: list[ScaleLoss]
    total: Tensor
    weights: LossWeights = field(default_factory=LossWeights)

    @property
    def total_value(self) -> float:
        return self.total.item()

    def lines(self) -> list[str]:
        out = []
        for r in self.records:
            for term in ("l1", "warp", "perceptual", "style"):
                out.append(f"{r.scale}\t{term}\t{getattr(r, term):.10g}")
        out.append(f"all\ttotal\t{self.total_value:.10g}")
        return out


def _check(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def warp_loss(warped: Tensor, wgt: Tensor) -> Tensor:
    _check(warped, wgt, "warp_loss")
    return mean_abs(sub(warped, wgt))


def l1_total(output: Tensor, gt_person: Tensor, warped: Tensor | None = None, wgt: Tensor | None = None) -> Tensor:
    """Try-on L1 plus the warp term; pass ``warped=None`` to drop the warp term."""
    _check(output, gt_person, "l1_total")
    tryon = mean_abs(sub(output, gt_person))
    if warped is None:
        return tryon
    return add(tryon, warp_loss(warped, wgt))


def _features(x: Tensor | FeaturePyramid, phi: PyramidParams) -> FeaturePyramid:
    return x if isinstance(x, FeaturePyramid) else pyramid_features(x, phi)


def perceptual_loss(a: Tensor | FeaturePyramid, b: Tensor | FeaturePyramid, phi: PyramidParams) -> Tensor:
    """Sum over levels of mean |phi_i(a) - phi_i(b)|; either side may be precomputed features."""
    fa, fb = _features(a, phi), _features(b, phi)
    total = None
    for la, lb in zip(fa.levels, fb.levels):
        _check(la, lb, "perceptual_loss")
        term = mean_abs(sub(la, lb))
        total = term if total is None else add(total, term)
    return total


def gram(features: Tensor) -> Tensor:
    c, h, w = features.shape
    flat = reshape(features, (c, h * w))
    return scale(matmul(flat, transpose2d(flat)), 1.0 / (c * h * w))


def style_loss(a: Tensor | FeaturePyramid, b: Tensor | FeaturePyramid, phi: PyramidParams) -> Tensor:
    fa, fb = _features(a, phi), _features(b, phi)
    total = None
    for la, lb in zip(fa.levels, fb.levels):
        _check(la, lb, "style_loss")
        term = mean_abs(sub(gram(la), gram(lb)))
        total = term if total is None else add(total, term)
    return total


@dataclass
class ScalePrediction:
    tryon: Tensor
    warped: Tensor


@dataclass
class ScaleTarget:
    person: Tensor
    wgt: Tensor
    person_features: FeaturePyramid | None = None


def total_loss(predictions: Sequence[ScalePrediction], targets: Sequence[ScaleTarget],
               weights: LossWeights, phi: PyramidParams, use_warp_loss: bool = True,
               scales: int | None = None) -> LossReport:
    """Weighted multi-scale objective; ``predictions`` ordered coarse (n=1) to fine (n=N)."""
    if scales is not None and len(predictions) != scales:
        raise ValidationError(f"expected {scales} per-scale predictions, got {len(predictions)}")
    if len(predictions) != len(targets) or not predictions:
        raise ValidationError(f"{len(predictions)} predictions for {len(targets)} targets")
    records, terms = [], []
    for n, (pred, tgt) in enumerate(zip(predictions, targets), start=1):
        tryon_l1 = mean_abs(sub(pred.tryon, tgt.person))
        warp = warp_loss(pred.warped, tgt.wgt)
        l1 = add(tryon_l1, warp) if use_warp_loss else tryon_l1
        person = tgt.person_features if tgt.person_features is not None else _features(tgt.person, phi)
        feats = pyramid_features(pred.tryon, phi)
        prec = perceptual_loss(feats, person, phi)
        sty = style_loss(feats, person, phi)
        terms.append((l1, prec, sty))
        records.append(ScaleLoss(n, l1.item(), warp.item(), prec.item(), sty.item(), float(n + 1)))
    return LossReport(records, weighted_total(terms, weights), weights)


def weighted_total(terms: Sequence[tuple[Tensor, Tensor, Tensor]], weights: LossWeights) -> Tensor:
    """Sum over scales n = 1.. of (n + 1) * (l1 + perceptual + style), each term lambda-weighted."""
    total = None
    for n, (l1, prec, sty) in enumerate(terms, start=1):
        term = add(add(scale(l1, weights.lambda_l1), scale(prec, weights.lambda_prec)),
                   scale(sty, weights.lambda_style))
        weighted = scale(term, n + 1)
        total = weighted if total is None else add(total, weighted)
    return total


def combine_terms(records: Sequence[ScaleLoss], weights: LossWeights) -> float:
    """Recompute the weighted total from a report's per-scale values."""
    return float(sum(r.scale_weight * (weights.lambda_l1 * r.l1 + weights.lambda_prec * r.perceptual
                                       + weights.lambda_style * r.style) for r in records))
