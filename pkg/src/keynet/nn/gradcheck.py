"""Finite-difference gradient checking.

The checker is the independent oracle for ``backward``: it never calls
backward to produce its reference values, only the forward pass and the
loss. Everything runs in float64 copies so central differences resolve
to ~1e-8 instead of drowning in float32 rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses
from .network import backward, forward


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped: int  # coordinates discarded for sitting on a ReLU kink


def _relu_signs(net, acts):
    """Sign pattern of every ReLU input; used to detect kink crossings."""
    signs = []
    for i, layer in enumerate(net.layers):
        if layer.kind == "relu":
            signs.append(acts[i] > 0)
    return signs


def finite_diff_gradcheck(net, x, targets, *, h=1e-5, num_coords=200,
                          rng=None, include_input=True):
    """Compare backward() against central differences of the loss.

    Samples ``num_coords`` coordinates across the input and all
    parameters, evaluates (L(c+h) - L(c-h)) / 2h for each, and returns
    the worst relative error. Coordinates whose +/-h perturbations flip
    any ReLU input sign are skipped: the loss is not differentiable
    there and the comparison is meaningless.
    """
    if not (1e-6 <= h <= 1e-3):
        raise ValueError(f"h must lie in [1e-6, 1e-3], got {h}")
    if rng is None:
        rng = np.random.default_rng(0)

    net = net.copy().astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)

    acts = forward(net, x)
    lgrad = losses.loss_grad(net.loss, acts[-1], targets)
    param_grads, input_grad = backward(net, acts, lgrad)

    tensors = []
    analytic = []
    if include_input:
        tensors.append(x)
        analytic.append(input_grad)
    for layer, grads in zip(net.layers, param_grads):
        for p, g in zip(layer.params, grads):
            tensors.append(p)
            analytic.append(g)

    sizes = np.array([t.size for t in tensors])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(num_coords, total), replace=False)
    bounds = np.cumsum(sizes)

    def loss_and_signs():
        a = forward(net, x)
        return losses.loss_value(net.loss, a[-1], targets), _relu_signs(net, a)

    max_err = 0.0
    checked = 0
    skipped = 0
    for flat in np.sort(picks):
        ti = int(np.searchsorted(bounds, flat, side="right"))
        k = int(flat - (bounds[ti - 1] if ti else 0))
        t = tensors[ti]
        orig = t.flat[k]

        t.flat[k] = orig + h
        lp, sp = loss_and_signs()
        t.flat[k] = orig - h
        lm, sm = loss_and_signs()
        t.flat[k] = orig

        if any((a != b).any() for a, b in zip(sp, sm)):
            skipped += 1
            continue

        numeric = (lp - lm) / (2.0 * h)
        a = analytic[ti].flat[k]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        max_err = max(max_err, err)
        checked += 1

    return GradCheckResult(max_rel_error=max_err, checked=checked,
                           skipped=skipped)
