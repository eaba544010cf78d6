"""Concrete architectures, the key-based head swap, and training loops.

Four 28x28x1 -> 10 softmax classifiers are built in. "baseline1" is the
reference model (three conv+ReLU stages, then two fully connected
layers); baseline2-4 are alternative stacks used for the transferability
comparison. A trained classifier becomes a key-based network by
replacing its final fully connected layer and softmax with a fresh
code-width layer and sigmoid output, then fine-tuning against the
squared code loss.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .codebook import binarize
from .nn.optim import NonFiniteGradient

ARCHITECTURES = ("baseline1", "baseline2", "baseline3", "baseline4")

OPTIMIZERS = ("sgd", "sgd-momentum")

INPUT_SHAPE = (28, 28, 1)

# retraining the code-regression head needs plain SGD at a much larger
# step: the squared code loss averages over batch *and* bits, and
# momentum tends to slam sigmoid outputs into wrong-side saturation
# where the gradient vanishes and a bit can never recover
KEY_RETRAIN_LR = 1.0
KEY_RETRAIN_MOMENTUM = 0.0


def key_retrain_config(epochs=10, seed=0, batch_size=64,
                       learning_rate=KEY_RETRAIN_LR):
    return TrainConfig(learning_rate=learning_rate, batch_size=batch_size,
                       epochs=epochs, seed=seed,
                       momentum=KEY_RETRAIN_MOMENTUM, optimizer="sgd")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite ({loss}) in "
                         f"epoch {epoch}")


@dataclass
class TrainConfig:
    learning_rate: float = 0.02
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    momentum: float = 0.9
    optimizer: str = "sgd-momentum"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")

    def to_dict(self):
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "momentum": self.momentum,
            "optimizer": self.optimizer,
        }


@dataclass
class TrainHistory:
    seed: int
    epoch_loss: list = field(default_factory=list)
    epoch_metric: list = field(default_factory=list)  # accuracy or code-match
    epoch_seconds: list = field(default_factory=list)

    @property
    def epochs(self):
        return len(self.epoch_loss)


# (kind, args) rows; every conv is followed by ReLU. The fully connected
# widths come from each stack's declared output sizes; the final width-10
# layer is the softmax head input.
_ARCH_LAYERS = {
    # reproduction choice for the unsized reference model: three conv
    # stages that shrink 28 -> 28 -> 14 -> 7, then FC 128 -> 10
    "baseline1": [
        ("conv", dict(out_channels=32, kernel_size=5, stride=1, padding="same")),
        ("conv", dict(out_channels=64, kernel_size=5, stride=2, padding="same")),
        ("conv", dict(out_channels=64, kernel_size=3, stride=2, padding="same")),
        ("dense", 128),
        ("dense", 10),
    ],
    "baseline2": [
        ("conv", dict(out_channels=64, kernel_size=8, stride=2, padding="same")),
        ("conv", dict(out_channels=128, kernel_size=6, stride=2, padding="valid")),
        ("conv", dict(out_channels=128, kernel_size=5, stride=1, padding="valid")),
        ("dense", 100),
        ("dense", 10),
    ],
    "baseline3": [
        ("conv", dict(out_channels=64, kernel_size=3, stride=2, padding="same")),
        ("conv", dict(out_channels=128, kernel_size=3, stride=2, padding="valid")),
        ("conv", dict(out_channels=128, kernel_size=5, stride=1, padding="valid")),
        ("dense", 100),
        ("dense", 200),
        ("dense", 10),
    ],
    "baseline4": [
        ("conv", dict(out_channels=128, kernel_size=3, stride=2, padding="valid")),
        ("conv", dict(out_channels=128, kernel_size=5, stride=2, padding="valid")),
        ("dense", 100),
        ("dense", 10),
    ],
}


def build_network(arch, *, num_classes=10, seed=0):
    """Construct a softmax classifier for one of the named architectures.

    Weight init: He-uniform for layers feeding a ReLU (the convs),
    Glorot-uniform for the fully connected tail, all from one seeded RNG
    in layer order, so the build is reproducible from the seed.
    """
    arch = normalize_arch(arch)
    rng = np.random.default_rng(seed)
    layers = []
    shape = INPUT_SHAPE
    rows = list(_ARCH_LAYERS[arch])
    rows[-1] = ("dense", num_classes)
    for kind, spec in rows:
        if kind == "conv":
            conv = nn.Conv2D(in_channels=shape[2], init="he", rng=rng, **spec)
            layers.append(conv)
            shape = conv.out_shape(shape)
            layers.append(nn.ReLU())
        else:
            if len(shape) != 1:
                layers.append(nn.Flatten())
                shape = layers[-1].out_shape(shape)
            dense = nn.Dense(shape[0], spec, init="glorot", rng=rng)
            layers.append(dense)
            shape = dense.out_shape(shape)
    return nn.Network(layers=layers, head="softmax", loss="cross_entropy",
                      input_shape=INPUT_SHAPE)


def normalize_arch(arch):
    """Accept 'baseline2', 'Baseline2', or bare '2'."""
    name = str(arch).strip().lower()
    if name.isdigit():
        name = f"baseline{name}"
    if name not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}; "
                         f"expected one of {ARCHITECTURES}")
    return name


def architecture_shapes(arch):
    """[(layer description, per-example output shape), ...] for inspection."""
    net = build_network(arch, seed=0)
    out = []
    shape = net.input_shape
    for layer in net.layers:
        shape = layer.out_shape(shape)
        out.append((repr(layer), shape))
    return out


def derive_key_network(baseline, cb, *, seed=0):
    """Re-head a trained softmax classifier for code regression.

    The hidden layers are copied bit-exactly from the baseline (the
    baseline itself is never mutated); the final fully connected layer is
    replaced by a fresh Glorot-initialized layer of the code width, the
    head becomes sigmoid and the loss the squared code loss. All layers
    stay trainable for the retraining pass.
    """
    if baseline.head != "softmax":
        raise ValueError("key networks derive from a softmax classifier")
    if baseline.num_outputs != cb.m:
        raise ValueError(
            f"baseline has {baseline.num_outputs} classes but codebook "
            f"has {cb.m} rows")
    layers = [layer.copy() for layer in baseline.layers]
    old_head = layers[-1]
    if old_head.kind != "dense":
        raise ValueError("expected the final layer to be fully connected")
    rng = np.random.default_rng(seed)
    layers[-1] = nn.Dense(old_head.in_features, cb.t, init="glorot", rng=rng)
    return nn.Network(layers=layers, head="sigmoid", loss="squared_code",
                      input_shape=baseline.input_shape)


def train(net, images, labels, cfg, *, codebook=None, eval_images=None,
          eval_labels=None, log=None):
    """Mini-batch SGD over shuffled data; returns the per-epoch history.

    For a softmax net the targets are one-hot labels; for a sigmoid
    (code-regression) net a codebook is required and the targets are the
    rows for each label. Shuffling derives from cfg.seed only, so a run
    is reproducible from (net initialization, data, cfg). If eval data is
    given, each epoch records test accuracy (softmax) or the exact
    code-match rate (sigmoid).
    """
    if (codebook is not None) != (net.head == "sigmoid"):
        raise ValueError("codebook must be given exactly when the network "
                         "has a code-regression head")
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels)
    if net.head == "sigmoid":
        target_table = codebook.rows.astype(np.float32)
    else:
        target_table = np.eye(net.num_outputs, dtype=np.float32)
    targets = target_table[labels]

    rng = np.random.default_rng(cfg.seed)
    momentum = cfg.momentum if cfg.optimizer == "sgd-momentum" else 0.0
    params = net.parameters()
    velocities = None
    history = TrainHistory(seed=cfg.seed)
    n = images.shape[0]

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb = images[idx]
            tb = targets[idx]
            acts = nn.forward(net, xb)
            if not np.isfinite(acts[-1]).all():
                raise TrainingDiverged(epoch, float("nan"))
            batch_loss = nn.loss_value(net.loss, acts[-1], tb)
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(epoch, batch_loss)
            loss_sum += batch_loss * len(idx)
            lgrad = nn.loss_grad(net.loss, acts[-1], tb)
            param_grads, _ = nn.backward(net, acts, lgrad)
            flat_grads = [g for grads in param_grads for g in grads]
            try:
                velocities = nn.sgd_update(params, flat_grads,
                                           cfg.learning_rate, momentum,
                                           velocities)
            except NonFiniteGradient:
                raise TrainingDiverged(epoch, float("nan")) from None
        history.epoch_loss.append(loss_sum / n)

        metric = None
        if eval_images is not None:
            if net.head == "softmax":
                metric = accuracy(net, eval_images, eval_labels)
            else:
                metric = code_match_rate(net, codebook, eval_images,
                                         eval_labels)
        history.epoch_metric.append(metric)
        history.epoch_seconds.append(time.perf_counter() - t0)
        if log is not None:
            shown = "" if metric is None else f"  metric={metric:.4f}"
            log(f"epoch {epoch + 1}/{cfg.epochs}  "
                f"loss={history.epoch_loss[-1]:.5f}{shown}")
    return history


def _batched_output(net, images, batch_size=256):
    outs = []
    for start in range(0, images.shape[0], batch_size):
        acts = nn.forward(net, images[start:start + batch_size])
        outs.append(acts[-1])
    return np.concatenate(outs, axis=0)


def predict_label(net, x):
    """Argmax class of a softmax net; lowest index wins ties.

    A single example returns an int, a batch returns an int array.
    """
    if net.head != "softmax":
        raise ValueError("predict_label needs a softmax head")
    x, single = _ensure_batch(net, x)
    labels = _batched_output(net, x).argmax(axis=1)
    return int(labels[0]) if single else labels


def predict_code(net, x):
    """Raw sigmoid outputs of a code-regression net (no binarization)."""
    if net.head != "sigmoid":
        raise ValueError("predict_code needs a code-regression head")
    x, single = _ensure_batch(net, x)
    out = _batched_output(net, x)
    return out[0] if single else out


def accuracy(net, images, labels):
    preds = predict_label(net, np.asarray(images, dtype=np.float32))
    return float((preds == np.asarray(labels)).mean())


def code_match_rate(net, cb, images, labels):
    """Fraction of examples whose binarized output equals their row."""
    out = predict_code(net, np.asarray(images, dtype=np.float32))
    bits = binarize(out)
    want = cb.rows[np.asarray(labels)]
    return float((bits == want).all(axis=1).mean())


def _ensure_batch(net, x):
    x = np.asarray(x, dtype=np.float32)
    if x.shape == net.input_shape:
        return x[None, ...], True
    return x, False
