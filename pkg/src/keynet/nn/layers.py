"""Layer primitives: Dense, Conv2D, ReLU, Sigmoid, Flatten.

Conventions used throughout the engine:

- Activations are numpy arrays with a leading batch dimension.
  Images are NHWC: (batch, height, width, channels).
- Parameters are float32; layers are dtype-agnostic so the same code
  runs in float64 for gradient checking.
- Every layer is pure: ``forward(x)`` has no side effects and
  ``backward(x, y, grad_out)`` recomputes whatever intermediate state it
  needs from its arguments. This is what makes concurrent inference on
  shared parameters safe.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Input shape incompatible with a layer's declared geometry."""


def _pair(v):
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def he_uniform(shape, fan_in, rng, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def glorot_uniform(shape, fan_in, fan_out, rng, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base class; subclasses define kind, params and the two passes."""

    kind = "abstract"

    @property
    def params(self):
        return []

    @property
    def param_names(self):
        return []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, x, y, grad_out):
        """Return ([gradients, one per param], gradient w.r.t. x)."""
        raise NotImplementedError

    def out_shape(self, in_shape):
        """Per-example output shape given per-example input shape."""
        raise NotImplementedError

    def geometry(self):
        """JSON-serializable constructor arguments (for checkpoints)."""
        return {}

    def astype(self, dtype):
        return self

    def copy(self):
        import copy as _copy

        return _copy.deepcopy(self)

    def __repr__(self):
        geo = ", ".join(f"{k}={v}" for k, v in self.geometry().items())
        return f"{type(self).__name__}({geo})"


class Dense(Layer):
    """Fully connected layer: y = x @ W + b, with x of shape (n, in_features)."""

    kind = "dense"

    def __init__(self, in_features, out_features, *, init="glorot", rng=None,
                 dtype=np.float32):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        if rng is None:
            self.W = np.zeros((self.in_features, self.out_features), dtype=dtype)
        elif init == "he":
            self.W = he_uniform((self.in_features, self.out_features),
                                self.in_features, rng, dtype)
        else:
            self.W = glorot_uniform((self.in_features, self.out_features),
                                    self.in_features, self.out_features, rng, dtype)
        self.b = np.zeros(self.out_features, dtype=dtype)

    @property
    def params(self):
        return [self.W, self.b]

    @property
    def param_names(self):
        return ["W", "b"]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"dense expects (n, {self.in_features}), got {x.shape}")
        return x @ self.W + self.b

    def backward(self, x, y, grad_out):
        dW = x.T @ grad_out
        db = grad_out.sum(axis=0)
        dx = grad_out @ self.W.T
        return [dW, db], dx

    def out_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise ShapeError(
                f"dense expects ({self.in_features},), got {in_shape}")
        return (self.out_features,)

    def geometry(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def astype(self, dtype):
        self.W = self.W.astype(dtype)
        self.b = self.b.astype(dtype)
        return self


class Conv2D(Layer):
    """2-D convolution on NHWC input; weights (kh, kw, c_in, c_out).

    Padding follows the usual "same"/"valid" size rules:
    same  -> out = ceil(in / stride), zero-padding split before/after
    valid -> out = (in - kernel) // stride + 1
    """

    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 padding="valid", *, init="he", rng=None, dtype=np.float32):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kh, self.kw = _pair(kernel_size)
        self.sh, self.sw = _pair(stride)
        if padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
        self.padding = padding
        fan_in = self.kh * self.kw * self.in_channels
        fan_out = self.kh * self.kw * self.out_channels
        shape = (self.kh, self.kw, self.in_channels, self.out_channels)
        if rng is None:
            self.W = np.zeros(shape, dtype=dtype)
        elif init == "he":
            self.W = he_uniform(shape, fan_in, rng, dtype)
        else:
            self.W = glorot_uniform(shape, fan_in, fan_out, rng, dtype)
        self.b = np.zeros(self.out_channels, dtype=dtype)

    @property
    def params(self):
        return [self.W, self.b]

    @property
    def param_names(self):
        return ["W", "b"]

    def _out_hw(self, h, w):
        if self.padding == "same":
            oh = -(-h // self.sh)
            ow = -(-w // self.sw)
        else:
            if h < self.kh or w < self.kw:
                raise ShapeError(
                    f"conv2d kernel {self.kh}x{self.kw} larger than input {h}x{w}")
            oh = (h - self.kh) // self.sh + 1
            ow = (w - self.kw) // self.sw + 1
        return oh, ow

    def _pad_amounts(self, h, w, oh, ow):
        if self.padding == "valid":
            return (0, 0), (0, 0)
        total_h = max(0, (oh - 1) * self.sh + self.kh - h)
        total_w = max(0, (ow - 1) * self.sw + self.kw - w)
        return ((total_h // 2, total_h - total_h // 2),
                (total_w // 2, total_w - total_w // 2))

    def _check_input(self, x):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeError(
                f"conv2d expects (n, h, w, {self.in_channels}), got {x.shape}")

    def _im2col(self, x):
        """Gather kernel patches into a (n*oh*ow, kh*kw*c_in) matrix."""
        n, h, w, c = x.shape
        oh, ow = self._out_hw(h, w)
        ph, pw = self._pad_amounts(h, w, oh, ow)
        if ph != (0, 0) or pw != (0, 0):
            x = np.pad(x, ((0, 0), ph, pw, (0, 0)))
        cols = np.empty((n, oh, ow, self.kh, self.kw, c), dtype=x.dtype)
        for i in range(self.kh):
            for j in range(self.kw):
                cols[:, :, :, i, j, :] = x[:, i:i + oh * self.sh:self.sh,
                                           j:j + ow * self.sw:self.sw, :]
        return cols.reshape(n * oh * ow, self.kh * self.kw * c), (oh, ow), (ph, pw)

    def forward(self, x):
        self._check_input(x)
        n = x.shape[0]
        cols, (oh, ow), _ = self._im2col(x)
        wmat = self.W.reshape(-1, self.out_channels)
        y = cols @ wmat + self.b
        return y.reshape(n, oh, ow, self.out_channels)

    def backward(self, x, y, grad_out):
        self._check_input(x)
        n, h, w, c = x.shape
        cols, (oh, ow), (ph, pw) = self._im2col(x)
        g = grad_out.reshape(n * oh * ow, self.out_channels)
        wmat = self.W.reshape(-1, self.out_channels)

        dW = (cols.T @ g).reshape(self.W.shape)
        db = g.sum(axis=0)

        dcols = (g @ wmat.T).reshape(n, oh, ow, self.kh, self.kw, c)
        padded_shape = (n, h + ph[0] + ph[1], w + pw[0] + pw[1], c)
        dxp = np.zeros(padded_shape, dtype=grad_out.dtype)
        for i in range(self.kh):
            for j in range(self.kw):
                dxp[:, i:i + oh * self.sh:self.sh,
                    j:j + ow * self.sw:self.sw, :] += dcols[:, :, :, i, j, :]
        dx = dxp[:, ph[0]:ph[0] + h, pw[0]:pw[0] + w, :]
        return [dW, db], dx

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[2] != self.in_channels:
            raise ShapeError(
                f"conv2d expects (h, w, {self.in_channels}), got {in_shape}")
        oh, ow = self._out_hw(in_shape[0], in_shape[1])
        return (oh, ow, self.out_channels)

    def geometry(self):
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": [self.kh, self.kw],
            "stride": [self.sh, self.sw],
            "padding": self.padding,
        }

    def astype(self, dtype):
        self.W = self.W.astype(dtype)
        self.b = self.b.astype(dtype)
        return self


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        return np.maximum(x, 0)

    def backward(self, x, y, grad_out):
        # subgradient at 0 taken as 0
        return [], grad_out * (x > 0)

    def out_shape(self, in_shape):
        return in_shape


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x):
        # split by sign so exp never overflows
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    def backward(self, x, y, grad_out):
        return [], grad_out * y * (1.0 - y)

    def out_shape(self, in_shape):
        return in_shape


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        return x.reshape(x.shape[0], -1)

    def backward(self, x, y, grad_out):
        return [], grad_out.reshape(x.shape)

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


LAYER_KINDS = {cls.kind: cls for cls in (Dense, Conv2D, ReLU, Sigmoid, Flatten)}


def layer_from_geometry(kind, geometry):
    """Rebuild a (zero-initialized) layer from its kind + geometry dict."""
    cls = LAYER_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"unknown layer kind {kind!r}")
    geo = dict(geometry)
    if kind == "conv2d":
        geo["kernel_size"] = tuple(geo["kernel_size"])
        geo["stride"] = tuple(geo["stride"])
    return cls(**geo)
