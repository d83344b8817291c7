import numpy as np
import pytest

import warpattn.tensor as T
from warpattn.losses import (LossWeights, ScaleLoss, ScalePrediction, ScaleTarget, combine_terms, gram,
                             l1_total, perceptual_loss, style_loss, total_loss, warp_loss, weighted_total)
from warpattn.pyramid import init_pyramid, pyramid_features
from warpattn.rng import SeededRng
from warpattn.tensor import Tensor, ValidationError

DEFAULT_WEIGHTS = LossWeights(1.0, 1.0, 100.0)


def _phi(seed=3):
    return init_pyramid(3, SeededRng(seed), channels=(4, 4, 4), frozen=True)


def _case(rng, scales=3, size=16):
    preds, targets = [], []
    for n in range(scales):
        s = size >> (scales - 1 - n)
        preds.append(ScalePrediction(Tensor(rng.uniform((3, s, s))), Tensor(rng.uniform((3, s, s)))))
        targets.append(ScaleTarget(Tensor(rng.uniform((3, s, s))), Tensor(rng.uniform((3, s, s)))))
    return preds, targets


def test_gram_matches_numpy(rng):
    f = rng.uniform((3, 4, 5))
    flat = f.reshape(3, 20)
    np.testing.assert_allclose(gram(Tensor(f)).data, flat @ flat.T / 60, atol=1e-15)


def test_terms_match_direct_numpy(rng):
    phi = _phi()
    a, b = rng.uniform((3, 8, 8)), rng.uniform((3, 8, 8))
    fa = [t.data for t in pyramid_features(Tensor(a), phi).levels]
    fb = [t.data for t in pyramid_features(Tensor(b), phi).levels]
    prec = sum(np.abs(x - y).mean() for x, y in zip(fa, fb))
    g = lambda x: x.reshape(x.shape[0], -1) @ x.reshape(x.shape[0], -1).T / x.size
    sty = sum(np.abs(g(x) - g(y)).mean() for x, y in zip(fa, fb))
    assert perceptual_loss(Tensor(a), Tensor(b), phi).item() == pytest.approx(prec, abs=1e-14)
    assert style_loss(Tensor(a), Tensor(b), phi).item() == pytest.approx(sty, abs=1e-14)
    assert warp_loss(Tensor(a), Tensor(b)).item() == pytest.approx(np.abs(a - b).mean(), abs=1e-15)
    assert l1_total(Tensor(a), Tensor(b), Tensor(b), Tensor(a)).item() == pytest.approx(2 * np.abs(a - b).mean())
    assert l1_total(Tensor(a), Tensor(b)).item() == pytest.approx(np.abs(a - b).mean())


def test_identical_inputs_give_zero(rng):
    phi = _phi()
    x = Tensor(rng.uniform((3, 8, 8)))
    assert perceptual_loss(x, x, phi).item() == 0.0
    assert style_loss(x, x, phi).item() == 0.0


def test_shape_mismatch():
    with pytest.raises(ValidationError):
        warp_loss(Tensor(np.ones((3, 4, 4))), Tensor(np.ones((3, 4, 5))))


def test_total_reproduces_weighted_sum(rng):
    preds, targets = _case(rng)
    report = total_loss(preds, targets, DEFAULT_WEIGHTS, _phi())
    by_hand = sum((r.scale + 1) * (r.l1 + r.perceptual + 100 * r.style) for r in report.records)
    assert abs(report.total_value - by_hand) <= 1e-12
    assert abs(report.total_value - combine_terms(report.records, DEFAULT_WEIGHTS)) <= 1e-12
    assert [r.scale_weight for r in report.records] == [2.0, 3.0, 4.0]


def test_single_scale_closed_form():
    t = 0.37
    terms = [(Tensor(np.array(t)), Tensor(np.array(t)), Tensor(np.array(t)))]
    assert weighted_total(terms, DEFAULT_WEIGHTS).item() == 204 * t
    record = ScaleLoss(1, t, 0.0, t, t, 2.0)
    assert combine_terms([record], DEFAULT_WEIGHTS) == 204 * t


def test_warp_toggle_removes_only_warp_term(rng):
    preds, targets = _case(rng)
    phi = _phi()
    with_warp = total_loss(preds, targets, DEFAULT_WEIGHTS, phi, use_warp_loss=True)
    without = total_loss(preds, targets, DEFAULT_WEIGHTS, phi, use_warp_loss=False)
    diff = sum((r.scale + 1) * r.warp for r in with_warp.records)
    assert with_warp.total_value - without.total_value == pytest.approx(diff, abs=1e-12)


def test_precomputed_target_features_match(rng):
    preds, targets = _case(rng)
    phi = _phi()
    cached = [ScaleTarget(t.person, t.wgt, pyramid_features(t.person, phi)) for t in targets]
    a = total_loss(preds, targets, DEFAULT_WEIGHTS, phi).total_value
    b = total_loss(preds, cached, DEFAULT_WEIGHTS, phi).total_value
    assert a == b


def test_scale_count_checked(rng):
    preds, targets = _case(rng)
    with pytest.raises(ValidationError):
        total_loss(preds, targets, DEFAULT_WEIGHTS, _phi(), scales=5)
    with pytest.raises(ValidationError):
        total_loss(preds[:2], targets, DEFAULT_WEIGHTS, _phi())
    with pytest.raises(ValidationError):
        LossWeights(-1.0, 1.0, 1.0)


def test_report_lines_and_gradient(rng):
    preds, targets = _case(rng, scales=2)
    tracked = [ScalePrediction(Tensor(p.tryon.data, requires_grad=True), p.warped) for p in preds]
    report = total_loss(tracked, targets, DEFAULT_WEIGHTS, _phi())
    lines = report.lines()
    assert len(lines) == 2 * 4 + 1 and lines[-1].startswith("all\ttotal\t")
    grads = T.backward(report.total)
    assert all(p.tryon.node_id in grads for p in tracked)
