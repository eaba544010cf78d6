"""Input validation helpers shared by the estimator facade and drivers."""

from __future__ import annotations

import numpy as np

INPUT_SHAPE = (28, 28, 1)


def check_image_batch(X, *, name="X"):
    """Coerce to (n, 28, 28, 1) float32 and verify pixels are in [0, 1].

    Accepts flat (n, 784), planar (n, 28, 28), or channeled (n, 28, 28, 1)
    arrays, so the estimators compose with tools that deal in 2-D feature
    matrices.
    """
    X = np.asarray(X, dtype=np.float32)
    flat = int(np.prod(INPUT_SHAPE))
    if X.ndim == 2 and X.shape[1] == flat:
        X = X.reshape(-1, *INPUT_SHAPE)
    elif X.ndim == 3 and X.shape[1:] == INPUT_SHAPE[:2]:
        X = X[..., None]
    elif X.ndim == 4 and X.shape[1:] == INPUT_SHAPE:
        pass
    else:
        raise ValueError(
            f"{name} must be (n, {flat}), (n, 28, 28) or (n, 28, 28, 1); "
            f"got {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains non-finite values")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError(
            f"{name} pixels must lie in [0, 1]; got range "
            f"[{X.min():.4f}, {X.max():.4f}]")
    return X


def check_labels(y, *, num_classes=10, n=None, name="y"):
    """Coerce to int64 labels in [0, num_classes)."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {y.shape}")
    if n is not None and len(y) != n:
        raise ValueError(f"{name} has {len(y)} entries for {n} samples")
    if y.size and (not np.issubdtype(y.dtype, np.integer)
                   and not np.equal(np.mod(y, 1), 0).all()):
        raise ValueError(f"{name} must contain integer class labels")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ValueError(
            f"{name} labels must lie in [0, {num_classes}); got range "
            f"[{y.min()}, {y.max()}]")
    return y
