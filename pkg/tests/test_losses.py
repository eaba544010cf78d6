"""Loss values against hand-computed oracles."""

import math

import numpy as np
import pytest

from keynet import nn


def test_cross_entropy_exact_prediction_is_zero():
    y = nn.one_hot([0, 2], 3)
    assert nn.cross_entropy(y.copy(), y) == pytest.approx(0.0, abs=1e-9)


def test_cross_entropy_uniform_is_log_m():
    probs = np.full((4, 10), 0.1, dtype=np.float32)
    y = nn.one_hot([0, 3, 5, 9], 10)
    assert nn.cross_entropy(probs, y) == pytest.approx(math.log(10), rel=1e-6)


def test_cross_entropy_matches_scalar_loop():
    rng = np.random.default_rng(0)
    raw = rng.uniform(0.1, 1.0, (3, 6))
    probs = (raw / raw.sum(axis=1, keepdims=True)).astype(np.float32)
    labels = [2, 0, 5]
    y = nn.one_hot(labels, 6)
    total = 0.0
    for i in range(3):
        for j in range(6):
            if y[i, j]:
                total -= math.log(max(float(probs[i, j]), 1e-12))
    assert nn.cross_entropy(probs, y) == pytest.approx(total / 3, rel=1e-10)


def test_cross_entropy_rejects_unnormalized_rows():
    probs = np.array([[0.5, 0.6]], dtype=np.float32)
    with pytest.raises(ValueError, match="sum to 1"):
        nn.cross_entropy(probs, nn.one_hot([0], 2))


def test_cross_entropy_clamps_log_argument():
    probs = np.array([[1.0, 0.0]], dtype=np.float32)
    loss = nn.cross_entropy(probs, nn.one_hot([1], 2))
    assert loss == pytest.approx(-math.log(1e-12))


def test_cross_entropy_grad_consistent_with_clamped_loss():
    probs = np.array([[1.0, 0.0]], dtype=np.float32)
    g = nn.cross_entropy_grad(probs, nn.one_hot([1], 2))
    assert g[0, 1] == 0.0  # below the clamp the loss is flat
    g2 = nn.cross_entropy_grad(np.array([[0.25, 0.75]], dtype=np.float32),
                               nn.one_hot([0], 2))
    assert g2[0, 0] == pytest.approx(-4.0)
    assert g2[0, 1] == 0.0


def test_squared_code_loss_zero_on_exact_match():
    codes = np.array([[0, 1, 1], [1, 0, 0]], dtype=np.float32)
    assert nn.squared_code_loss(codes.copy(), codes) == 0.0


def test_squared_code_loss_half_everywhere_is_quarter():
    for n, t in ((1, 3), (4, 7), (2, 30)):
        pred = np.full((n, t), 0.5, dtype=np.float32)
        codes = np.random.default_rng(n * t).integers(0, 2, (n, t)).astype(
            np.float32)
        assert nn.squared_code_loss(pred, codes) == pytest.approx(0.25)


def test_squared_code_loss_matches_scalar_loop():
    rng = np.random.default_rng(1)
    pred = rng.uniform(0, 1, (2, 3))
    codes = rng.integers(0, 2, (2, 3)).astype(np.float64)
    total = 0.0
    for i in range(2):
        for j in range(3):
            total += (pred[i, j] - codes[i, j]) ** 2
    want = total / (2 * 3)
    assert nn.squared_code_loss(pred, codes) == pytest.approx(want, abs=1e-12)


def test_squared_code_loss_shape_mismatch():
    with pytest.raises(ValueError, match="differ"):
        nn.squared_code_loss(np.zeros((2, 3)), np.zeros((2, 4)))


def test_losses_are_nonnegative():
    rng = np.random.default_rng(2)
    for _ in range(20):
        raw = rng.uniform(0.01, 1.0, (4, 5))
        probs = (raw / raw.sum(axis=1, keepdims=True)).astype(np.float32)
        y = nn.one_hot(rng.integers(0, 5, 4), 5)
        assert nn.cross_entropy(probs, y) >= 0.0
        pred = rng.uniform(0, 1, (4, 6)).astype(np.float32)
        codes = rng.integers(0, 2, (4, 6)).astype(np.float32)
        assert nn.squared_code_loss(pred, codes) >= 0.0


def test_squared_code_grad_direction():
    pred = np.array([[0.9, 0.1]], dtype=np.float32)
    codes = np.array([[1.0, 0.0]], dtype=np.float32)
    g = nn.squared_code_loss_grad(pred, codes)
    # moving pred toward the codes must reduce the loss
    assert g[0, 0] < 0 and g[0, 1] > 0
