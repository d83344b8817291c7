import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import warpattn.tensor as T
from warpattn.laf import (LinearAttentionParams, attention_memory_estimate, dense_attention,
                          estimate_flow_at_scale, init_flow_head, init_linear_attention, linear_attention)
from warpattn.rng import SeededRng
from warpattn.tensor import Tensor, ValidationError
from warpattn.warp import FlowStack, upsample_flowstack

from .oracles import eq1_oracle


def identity_params(n, d):
    eye = lambda m: Tensor(np.eye(m))
    return LinearAttentionParams([eye(d)], [eye(d)], [eye(d)], [eye(n)], [eye(n)], eye(d))


def test_identity_projections_equal_dense(rng):
    n, d = 8, 4
    p = identity_params(n, d)
    x = [Tensor(rng.uniform((n, d))) for _ in range(3)]
    np.testing.assert_allclose(linear_attention(*x, p).data, dense_attention(*x, p).data, atol=1e-10)


@pytest.mark.parametrize("heads", [1, 2])
def test_matches_literal_loop_oracle(rng, heads):
    n, d, k = 8, 4, 2
    p = init_linear_attention(rng, n, d, k, heads)
    q, kk, v = (rng.uniform((n, d), -1, 1) for _ in range(3))
    out = linear_attention(Tensor(q), Tensor(kk), Tensor(v), p).data
    np.testing.assert_allclose(out, eq1_oracle(q, kk, v, p), atol=1e-12)


def test_constant_values_pass_through_with_stochastic_f(rng):
    n, d, k = 6, 3, 4
    p = init_linear_attention(rng, n, d, k)
    f = rng.uniform((n, k), 0.1, 1.0)
    p.f = [Tensor(f / f.sum(axis=0))]           # columns sum to 1
    p.w_v = [Tensor(np.eye(d))]
    p.w_o = Tensor(np.eye(d))
    c = np.array([0.3, -1.2, 2.0])
    out = linear_attention(Tensor(rng.uniform((n, d))), Tensor(rng.uniform((n, d))), Tensor(np.tile(c, (n, 1))), p)
    np.testing.assert_allclose(out.data, np.tile(c, (n, 1)), atol=1e-12)


def test_dense_single_key_and_uniform_scores(rng):
    d = 4
    p = init_linear_attention(rng, 1, d, 1)
    v = rng.uniform((1, d))
    out = dense_attention(Tensor(rng.uniform((1, d))), Tensor(rng.uniform((1, d))), Tensor(v), p).data
    np.testing.assert_allclose(out, v @ p.w_v[0].data @ p.w_o.data, atol=1e-14)

    n = 5
    p = init_linear_attention(rng, n, d, n)
    v = rng.uniform((n, d))
    zeros = Tensor(np.zeros((n, d)))
    out = dense_attention(zeros, zeros, Tensor(v), p).data
    expected = np.tile((v @ p.w_v[0].data).mean(axis=0) @ p.w_o.data, (n, 1))
    np.testing.assert_allclose(out, expected, atol=1e-14)


def test_projection_size_mismatch(rng):
    p = init_linear_attention(rng, 8, 4, 2)
    x = Tensor(rng.uniform((6, 4)))
    with pytest.raises(ValidationError, match="n=8"):
        linear_attention(x, x, x, p)
    with pytest.raises(ValidationError):
        init_linear_attention(rng, 4, 4, 5)
    with pytest.raises(ValidationError):
        init_linear_attention(rng, 4, 6, 2, heads=4)


def test_memory_estimate():
    assert attention_memory_estimate(1024, 64, 1, "f32", "linear") == 262144
    assert attention_memory_estimate(1024, 64, 1, "f32", "dense") == 4194304
    assert attention_memory_estimate(32, 32, 2, "f64", "linear") == attention_memory_estimate(32, 32, 2, "f64", "dense")


def _flow_case(rng, c=4, h=4, w=4, k=3, out_init="small"):
    attn = init_linear_attention(rng, h * w, c, 4)
    head = init_flow_head(rng, c, k, hidden=5, out_init=out_init)
    src, ref = Tensor(rng.uniform((c, h, w))), Tensor(rng.uniform((c, h, w)))
    return src, ref, attn, head


def test_zero_head_gives_zero_flows(rng):
    src, ref, attn, head = _flow_case(rng, out_init="zero")
    stack = estimate_flow_at_scale(src, ref, None, attn, head)
    assert stack.k == 3 and stack.spatial == (4, 4)
    for f in stack.flows:
        np.testing.assert_array_equal(f.data, 0.0)
    np.testing.assert_array_equal(stack.logits.data, 0.0)


def test_zero_residual_keeps_upsampled_previous(rng):
    src, ref, attn, head = _flow_case(rng, h=4, w=4, out_init="zero")
    coarse = np.zeros((2, 2, 2))
    coarse[0] = 2.0
    prev = upsample_flowstack(FlowStack([Tensor(coarse)] * 3, Tensor(np.zeros((3, 2, 2)))))
    stack = estimate_flow_at_scale(src, ref, prev, attn, head)
    for f in stack.flows:
        np.testing.assert_allclose(f.data[0], 4.0, atol=1e-14)
        np.testing.assert_allclose(f.data[1], 0.0, atol=1e-14)


def test_flow_scale_validates(rng):
    src, ref, attn, head = _flow_case(rng)
    with pytest.raises(ValidationError):
        estimate_flow_at_scale(src, Tensor(np.ones((4, 2, 2))), None, attn, head)
    bad_prev = FlowStack([Tensor(np.zeros((2, 4, 4)))], Tensor(np.zeros((1, 4, 4))))
    with pytest.raises(ValidationError):
        estimate_flow_at_scale(src, ref, bad_prev, attn, head)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([4, 8, 16]), st.integers(0, 2 ** 32 - 1))
def test_full_rank_identity_equivalence_property(n, seed):
    r = SeededRng(seed)
    d = 4
    p = init_linear_attention(r, n, d, n)
    p.e = [Tensor(np.eye(n))]
    p.f = [Tensor(np.eye(n))]
    q, k, v = (Tensor(r.uniform((n, d), -2, 2)) for _ in range(3))
    assert np.max(np.abs(linear_attention(q, k, v, p).data - dense_attention(q, k, v, p).data)) <= 1e-8


def test_linear_output_rows_in_value_hull_with_stochastic_f(rng):
    n, d, k = 7, 3, 3
    p = init_linear_attention(rng, n, d, k)
    f = rng.uniform((n, k), 0.1, 1.0)
    p.f = [Tensor(f / f.sum(axis=0))]
    p.w_v, p.w_o = [Tensor(np.eye(d))], Tensor(np.eye(d))
    v = rng.uniform((n, d))
    out = linear_attention(Tensor(rng.uniform((n, d))), Tensor(rng.uniform((n, d))), Tensor(v), p).data
    assert np.all(out >= v.min(axis=0) - 1e-12) and np.all(out <= v.max(axis=0) + 1e-12)


def test_gradients_flow_to_projections(rng):
    n, d, k = 6, 4, 3
    p = init_linear_attention(rng, n, d, k)
    x = Tensor(rng.uniform((n, d)))
    grads = T.backward(T.sum(T.tanh(linear_attention(x, x, x, p))))
    for t in p.e + p.f + p.w_q + [p.w_o]:
        assert t.node_id in grads and np.any(grads[t.node_id].data != 0)
