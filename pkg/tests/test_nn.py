import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from citysent.nn import (
    AdamState,
    cross_entropy,
    grad_check,
    init_mlp,
    mlp_apply,
    mlp_backward,
    optimizer_step,
    softmax,
)


def test_init_glorot_bounds():
    rng = np.random.default_rng(0)
    m = init_mlp([10, 7, 3], ["tanh", "identity"], rng)
    for layer, (fi, fo) in zip(m.layers, [(10, 7), (7, 3)]):
        a = math.sqrt(6.0 / (fi + fo))
        assert np.all(np.abs(layer.weight) <= a)
        assert np.all(layer.bias == 0.0)


def test_init_deterministic():
    a = init_mlp([4, 3], ["relu"], np.random.default_rng(7))
    b = init_mlp([4, 3], ["relu"], np.random.default_rng(7))
    assert np.array_equal(a.layers[0].weight, b.layers[0].weight)


def test_unknown_activation_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        init_mlp([3, 2], ["sigmoid"], rng)


def test_batch_matches_single():
    rng = np.random.default_rng(1)
    m = init_mlp([5, 8, 2], ["tanh", "identity"], rng)
    x = rng.normal(size=(6, 5))
    batch_out, _ = mlp_apply(m, x)
    for i in range(6):
        single_out, _ = mlp_apply(m, x[i])
        np.testing.assert_allclose(batch_out[i], single_out, rtol=0, atol=1e-14)


@pytest.mark.parametrize("acts", [["tanh", "identity"], ["relu", "identity"], ["tanh", "relu", "identity"]])
def test_mlp_gradients_match_finite_differences(acts):
    rng = np.random.default_rng(3)
    sizes = [4] + [5] * (len(acts) - 1) + [2]
    m = init_mlp(sizes, acts, rng)
    x = rng.normal(size=(3, 4))
    target = rng.normal(size=(3, 2))

    def loss_fn(_params):
        out, cache = mlp_apply(m, x)
        diff = out - target
        grads, _ = mlp_backward(m, cache, 2.0 * diff)
        flat = []
        for gw, gb in grads:
            flat.extend([gw, gb])
        return float((diff**2).sum()), flat

    assert grad_check(loss_fn, m.params()) < 1e-6


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8))
def test_softmax_simplex(logits):
    p = softmax(np.array(logits))
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-12


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8), st.floats(-50, 50))
def test_softmax_shift_invariant(logits, shift):
    a = softmax(np.array(logits))
    b = softmax(np.array(logits) + shift)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_cross_entropy_uniform_closed_form():
    loss, _ = cross_entropy(np.array([1 / 3, 1 / 3, 1 / 3]), 0, 1.0)
    assert abs(loss - math.log(3)) < 1e-12


def test_cross_entropy_weight_scales_linearly():
    p = np.array([0.2, 0.5, 0.3])
    l1, g1 = cross_entropy(p, 1, 1.0)
    l2, g2 = cross_entropy(p, 1, 2.5)
    assert abs(l2 - 2.5 * l1) < 1e-12
    np.testing.assert_allclose(g2, 2.5 * g1)


def test_cross_entropy_grad_matches_finite_differences():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=3)

    def loss_fn(params):
        p = softmax(params[0])
        loss, grad = cross_entropy(p, -1, 1.3)
        return float(loss), [grad]

    assert grad_check(loss_fn, [logits]) < 1e-7


def test_cross_entropy_rejects_bad_inputs():
    with pytest.raises(ValueError):
        cross_entropy(np.array([0.5, 0.5, 0.5]), 0, 1.0)
    with pytest.raises(ValueError):
        cross_entropy(np.array([0.2, 0.5, 0.3]), 0, -1.0)


def test_cross_entropy_clamps_zero_probability():
    loss, _ = cross_entropy(np.array([0.0, 0.5, 0.5]), -1, 1.0)
    assert np.isfinite(loss)
    assert loss == pytest.approx(-math.log(1e-12))


def test_adam_first_step_magnitude():
    # with bias correction, step 1 moves each coordinate by ~lr * sign(g)
    p = np.zeros(4)
    g = np.array([1.0, -2.0, 0.5, 3.0])
    state = AdamState.for_params([p], learning_rate=1e-3)
    optimizer_step(state, [p], [g])
    np.testing.assert_allclose(np.abs(p), 1e-3 * np.ones(4), rtol=1e-6)
    assert np.all(np.sign(p) == -np.sign(g))


def test_adam_rejects_non_finite_gradients():
    p = np.zeros(2)
    state = AdamState.for_params([p])
    with pytest.raises(ValueError):
        optimizer_step(state, [p], [np.array([np.nan, 0.0])])
    assert np.all(p == 0.0)


def test_adam_converges_on_quadratic():
    p = np.array([5.0, -3.0])
    state = AdamState.for_params([p], learning_rate=0.1)
    for _ in range(500):
        optimizer_step(state, [p], [2.0 * p])
    assert np.all(np.abs(p) < 1e-3)
