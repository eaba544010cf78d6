"""Training losses and their gradients.

Both losses return float64 scalars (accumulation in double precision)
while their gradients come back in the dtype of the predictions, so the
fast float32 training path stays float32.
"""

from __future__ import annotations

import numpy as np

# floor for log arguments; avoids -inf on confidently wrong predictions
LOG_CLAMP = 1e-12

# tolerance for "rows sum to 1" validation of probability inputs
_ROW_SUM_TOL = 1e-6


def one_hot(labels, num_classes):
    labels = np.asarray(labels)
    out = np.zeros((labels.size, num_classes), dtype=np.float32)
    out[np.arange(labels.size), labels.ravel()] = 1.0
    return out


def _check_probs(probs):
    sums = probs.sum(axis=1, dtype=np.float64)
    bad = np.abs(sums - 1.0) > _ROW_SUM_TOL
    if bad.any():
        i = int(np.argmax(bad))
        raise ValueError(
            f"probability rows must sum to 1 (row {i} sums to {sums[i]:.8f})")


def cross_entropy(probs, labels_onehot):
    """Mean negative log-likelihood: -(1/n) sum_i sum_j y_ij log p_ij."""
    if probs.shape != labels_onehot.shape:
        raise ValueError(
            f"probs {probs.shape} and labels {labels_onehot.shape} differ")
    _check_probs(probs)
    n = probs.shape[0]
    logp = np.log(np.maximum(probs.astype(np.float64), LOG_CLAMP))
    return float(-(labels_onehot * logp).sum() / n)


def cross_entropy_grad(probs, labels_onehot):
    """Gradient of cross_entropy w.r.t. probs (zero below the log clamp)."""
    n = probs.shape[0]
    grad = np.zeros_like(probs)
    active = probs >= LOG_CLAMP
    np.divide(-labels_onehot, probs * n, out=grad, where=active)
    return grad


def squared_code_loss(pred, codes):
    """Mean squared discrepancy over batch and code bits.

    L = (1/n)(1/t) sum_i sum_j (pred_ij - code_ij)^2
    """
    if pred.shape != codes.shape:
        raise ValueError(f"pred {pred.shape} and codes {codes.shape} differ")
    n, t = pred.shape
    diff = pred.astype(np.float64) - codes
    return float((diff * diff).sum() / (n * t))


def squared_code_loss_grad(pred, codes):
    n, t = pred.shape
    return (2.0 / (n * t)) * (pred - codes.astype(pred.dtype))


def loss_value(kind, output, targets):
    if kind == "cross_entropy":
        return cross_entropy(output, targets)
    if kind == "squared_code":
        return squared_code_loss(output, targets)
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_grad(kind, output, targets):
    if kind == "cross_entropy":
        return cross_entropy_grad(output, targets)
    if kind == "squared_code":
        return squared_code_loss_grad(output, targets)
    raise ValueError(f"unknown loss kind {kind!r}")
