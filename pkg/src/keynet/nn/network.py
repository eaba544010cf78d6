"""Network container and the forward/backward passes.

A Network is an ordered layer stack plus an output head. The head is a
fixed nonlinearity applied to the last layer's output:

- "softmax": class probabilities, rows sum to 1 (cross-entropy training)
- "sigmoid": independent unit-interval outputs (code-regression training)

``forward`` returns the full activation list so that attacks and the
gradient checker can reuse intermediate values:

    acts[0]      input batch
    acts[i + 1]  output of layers[i]
    acts[-2]     logits (last layer output, before the head)
    acts[-1]     head output

``backward`` consumes that list and a loss gradient and produces
per-layer parameter gradients plus the gradient w.r.t. the input batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Layer, ShapeError

HEADS = ("softmax", "sigmoid")
LOSS_KINDS = ("cross_entropy", "squared_code")

# legal head/loss pairings: probabilities train against cross-entropy,
# code regression against the squared code loss
_HEAD_FOR_LOSS = {"cross_entropy": "softmax", "squared_code": "sigmoid"}


@dataclass
class Network:
    layers: list = field(default_factory=list)
    head: str = "softmax"
    loss: str = "cross_entropy"
    input_shape: tuple = (28, 28, 1)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.loss!r}")
        if _HEAD_FOR_LOSS[self.loss] != self.head:
            raise ValueError(
                f"loss {self.loss!r} must be paired with head "
                f"{_HEAD_FOR_LOSS[self.loss]!r}, not {self.head!r}")

    @property
    def num_outputs(self):
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        if len(shape) != 1:
            raise ShapeError(f"network output must be flat, got {shape}")
        return shape[0]

    def layer_shapes(self):
        """Per-example output shape after each layer."""
        shapes = []
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
            shapes.append(shape)
        return shapes

    def parameters(self):
        """Flat list of parameter arrays, in layer order."""
        return [p for layer in self.layers for p in layer.params]

    def copy(self):
        return Network(layers=[l.copy() for l in self.layers], head=self.head,
                       loss=self.loss, input_shape=self.input_shape)

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def apply_head(head, z):
    if head == "softmax":
        return softmax(z)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep the code head strictly inside (0,1): saturated logits would
    # otherwise round to exactly 0/1 in float32 and kill the gradient
    eps = np.finfo(out.dtype).eps
    return np.clip(out, eps, 1.0 - eps)


def head_input_grad(head, out, grad_out):
    """Pull a gradient w.r.t. the head output back to the logits."""
    if head == "softmax":
        # rowwise Jacobian: dz = p * (g - sum(g * p))
        inner = (grad_out * out).sum(axis=1, keepdims=True)
        return out * (grad_out - inner)
    return grad_out * out * (1.0 - out)


def forward(net, x):
    """Run a batch through the network; see module docstring for layout."""
    x = np.asarray(x)
    if x.ndim == len(net.input_shape):
        raise ShapeError(
            f"forward expects a batch; got unbatched shape {x.shape} "
            f"(add a leading dimension)")
    if tuple(x.shape[1:]) != net.input_shape:
        raise ShapeError(
            f"input shape {tuple(x.shape[1:])} does not match network "
            f"input {net.input_shape}")
    acts = [x]
    for i, layer in enumerate(net.layers):
        try:
            x = layer.forward(x)
        except ShapeError as e:
            raise ShapeError(f"layer {i} ({layer.kind}): {e}") from None
        acts.append(x)
    acts.append(apply_head(net.head, acts[-1]))
    return acts


def backward(net, acts, loss_grad, *, wrt_logits=False):
    """Backpropagate ``loss_grad`` through the network.

    ``loss_grad`` is the gradient w.r.t. the head output (the default) or
    w.r.t. the logits when ``wrt_logits`` is set; attacks use the latter
    to differentiate individual class scores.

    Returns (param_grads, input_grad) where param_grads[i] aligns with
    net.layers[i].params.
    """
    n_layers = len(net.layers)
    if len(acts) != n_layers + 2:
        raise ValueError(
            f"activation list has {len(acts)} entries, expected "
            f"{n_layers + 2}; was it produced by forward() on this net?")
    if loss_grad.shape != acts[-1].shape:
        raise ValueError(
            f"loss gradient shape {loss_grad.shape} does not match output "
            f"shape {acts[-1].shape}")
    if wrt_logits:
        g = loss_grad
    else:
        g = head_input_grad(net.head, acts[-1], loss_grad)
    param_grads = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        grads, g = net.layers[i].backward(acts[i], acts[i + 1], g)
        param_grads[i] = grads
    return param_grads, g
