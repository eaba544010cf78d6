"""SGD update rule against hand-unrolled arithmetic."""

import numpy as np
import pytest

from keynet import nn


def test_zero_gradients_leave_params_unchanged():
    p = np.array([1.0, -2.0], dtype=np.float32)
    nn.sgd_update([p], [np.zeros_like(p)], lr=0.5, momentum=0.9)
    np.testing.assert_array_equal(p, [1.0, -2.0])


def test_single_plain_step():
    p = np.array([1.0], dtype=np.float64)
    nn.sgd_update([p], [np.array([2.0])], lr=0.1, momentum=0.0)
    assert p[0] == pytest.approx(0.8)


def test_two_momentum_steps_match_unrolled_recursion():
    mu, lr = 0.9, 0.05
    p = np.array([1.0], dtype=np.float64)
    g1, g2 = np.array([0.3]), np.array([-0.7])

    v = nn.sgd_update([p], [g1], lr, mu)
    nn.sgd_update([p], [g2], lr, mu, velocities=v)

    # hand-unrolled: v1 = g1; p1 = p0 - lr v1; v2 = mu v1 + g2; p2 = p1 - lr v2
    v1 = 0.3
    p1 = 1.0 - lr * v1
    v2 = mu * v1 - 0.7
    p2 = p1 - lr * v2
    assert p[0] == pytest.approx(p2, abs=1e-12)
    assert v[0][0] == pytest.approx(v2, abs=1e-12)


def test_nan_gradient_refuses_step():
    p = np.array([1.0], dtype=np.float32)
    with pytest.raises(ValueError, match="non-finite"):
        nn.sgd_update([p], [np.array([np.nan], dtype=np.float32)], lr=0.1)
    assert p[0] == 1.0  # untouched


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="shape"):
        nn.sgd_update([np.zeros(2)], [np.zeros(3)], lr=0.1)


def test_nonpositive_lr_rejected():
    with pytest.raises(ValueError, match="positive"):
        nn.sgd_update([np.zeros(2)], [np.zeros(2)], lr=0.0)


def test_sgd_class_threads_velocity():
    opt = nn.SGD(lr=0.1, momentum=0.5)
    p = np.array([0.0], dtype=np.float64)
    opt.step([p], [np.array([1.0])])
    opt.step([p], [np.array([1.0])])
    # v1=1, p=-0.1; v2=1.5, p=-0.25
    assert p[0] == pytest.approx(-0.25)
