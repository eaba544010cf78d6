"""Gray-box adversarial example generation against a softmax classifier.

Three standard attacks, each operating on one example at a time with an
outer batch driver (per-example stopping criteria stay simple that way):

- fgsm: one signed-gradient step of size epsilon, projected into the
  L-inf ball of radius r around the input, then clipped to the pixel box.
- deepfool_linf: iterative linearization; per iteration, step across the
  nearest class boundary under the L-inf-minimal (L1-normalized) rule.
- carlini_l2: untargeted L2 attack with the tanh change of variables,
  confidence margin kappa, and binary search over the tradeoff constant.

Attacks only ever see the baseline network: the codebook and the
key-based network are not inputs here.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .models import predict_label

ATTACK_KINDS = ("fgsm", "deepfool", "carlini")

# boundary-crossing nudge added to the deepfool step, and the atanh
# clamp keeping the carlini reparameterization finite
_DEEPFOOL_NUDGE = 1e-4
_ATANH_CLAMP = 1.0 - 1e-6


@dataclass
class AttackConfig:
    kind: str
    # fgsm
    epsilon: float = 0.3
    r: float | None = None  # ball radius; defaults to epsilon
    # deepfool
    max_iter: int = 50
    overshoot: float = 0.02
    # carlini
    kappa: float = 0.0
    binary_search_steps: int = 6
    max_inner_iter: int = 200
    inner_lr: float = 5e-2
    initial_const: float = 1e-2
    inner_momentum: float = 0.9

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.r is not None and self.r <= 0:
            raise ValueError("r must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if min(self.max_iter, self.binary_search_steps,
               self.max_inner_iter) < 1:
            raise ValueError("iteration counts must be >= 1")

    def relevant_params(self):
        """The hyperparameters that actually apply to this attack kind."""
        if self.kind == "fgsm":
            return {"epsilon": self.epsilon,
                    "r": self.epsilon if self.r is None else self.r}
        if self.kind == "deepfool":
            return {"max_iter": self.max_iter, "overshoot": self.overshoot}
        return {"kappa": self.kappa,
                "binary_search_steps": self.binary_search_steps,
                "max_inner_iter": self.max_inner_iter,
                "inner_lr": self.inner_lr,
                "initial_const": self.initial_const,
                "inner_momentum": self.inner_momentum}

    def describe(self):
        params = self.relevant_params()
        short = {"fgsm": f"eps={params.get('epsilon')}",
                 "deepfool": "",
                 "carlini": f"kappa={params.get('kappa')}"}[self.kind]
        return f"{self.kind}({short})" if short else self.kind


def _loss_input_grad(net, x, y):
    """Gradient of the cross-entropy loss w.r.t. a single input."""
    xb = x[None]
    acts = nn.forward(net, xb)
    onehot = nn.one_hot([y], net.num_outputs)
    lgrad = nn.cross_entropy_grad(acts[-1], onehot)
    _, input_grad = nn.backward(net, acts, lgrad)
    return input_grad[0]


def fgsm(net, x, y, epsilon, r=None):
    """x' = Proj_{B_r(x)}(x + epsilon * sign(grad_x loss)), boxed to [0,1].

    sign(0) = 0, so a flat loss leaves the input untouched.
    """
    if net.head != "softmax":
        raise ValueError("fgsm attacks a softmax classifier")
    if r is None:
        r = epsilon
    x = np.asarray(x, dtype=np.float32)
    g = _loss_input_grad(net, x, int(y))
    x_adv = x + np.float32(epsilon) * np.sign(g)
    x_adv = np.clip(x_adv, x - np.float32(r), x + np.float32(r))
    return np.clip(x_adv, 0.0, 1.0)


def _logits_and_jacobian(net, x):
    """Class scores at x and their gradients w.r.t. x, in one batched
    backward pass (the example is replicated once per class and an
    identity gradient injected at the logits)."""
    m = net.num_outputs
    xb = np.repeat(x[None], m, axis=0)
    acts = nn.forward(net, xb)
    logits = acts[-2][0].astype(np.float64)
    inject = np.eye(m, dtype=xb.dtype)
    _, jac = nn.backward(net, acts, inject, wrt_logits=True)
    return logits, jac


@dataclass
class DeepFoolResult:
    x_adv: np.ndarray
    converged: bool
    iterations: int


def deepfool_linf(net, x, true_label=None, max_iter=50, overshoot=0.02):
    """Iterative linearization with L-inf-minimal boundary steps.

    Per iteration the class-score differences are linearized around the
    current iterate; the boundary needing the smallest L-inf step is the
    one minimizing |f_k - f_label| / ||w_k - w_label||_1, and the step is
    that distance times the sign pattern of the weight difference. Stops
    when the predicted label changes (converged) or after max_iter. The
    accumulated perturbation is scaled by (1 + overshoot) and boxed.

    When ``true_label`` is given and the input is already misclassified,
    the input comes back unchanged after zero iterations.
    """
    if net.head != "softmax":
        raise ValueError("deepfool attacks a softmax classifier")
    x0 = np.asarray(x, dtype=np.float32)
    label = predict_label(net, x0)
    if true_label is not None and label != int(true_label):
        return DeepFoolResult(x_adv=x0.copy(), converged=True, iterations=0)

    r_tot = np.zeros_like(x0)
    iterations = 0
    converged = False
    for _ in range(max_iter):
        x_pert = np.clip(x0 + (1.0 + overshoot) * r_tot, 0.0, 1.0)
        logits, jac = _logits_and_jacobian(net, x_pert)
        if int(logits.argmax()) != label:
            converged = True
            break
        w = (jac - jac[label]).reshape(len(logits), -1).astype(np.float64)
        f = logits - logits[label]
        l1 = np.abs(w).sum(axis=1)
        dist = np.abs(f) / np.maximum(l1, 1e-12)
        dist[label] = np.inf
        dist[l1 < 1e-12] = np.inf
        k = int(dist.argmin())
        if not np.isfinite(dist[k]):
            break  # degenerate gradients; give up unconverged
        step = (dist[k] + _DEEPFOOL_NUDGE) * np.sign(w[k])
        r_tot += step.reshape(x0.shape).astype(np.float32)
        iterations += 1

    x_adv = np.clip(x0 + (1.0 + overshoot) * r_tot, 0.0, 1.0)
    if not converged:
        converged = predict_label(net, x_adv) != label
    return DeepFoolResult(x_adv=x_adv, converged=converged,
                          iterations=iterations)


@dataclass
class CarliniResult:
    x_adv: np.ndarray
    success: bool
    l2: float
    const: float


def carlini_l2(net, x, y, kappa=0.0, *, binary_search_steps=6,
               max_inner_iter=200, inner_lr=5e-2, initial_const=1e-2,
               inner_momentum=0.9):
    """Untargeted L2 attack with tanh box reparameterization.

    Optimizes ||x'-x||^2 + c * max(Z_y - max_{j!=y} Z_j + kappa, 0) over
    w with x' = (tanh(w)+1)/2, so x' is in the box by construction. The
    tradeoff constant c is found by binary search: success at a given c
    (label changed with margin kappa) halves it, failure raises it. The
    smallest-L2 successful iterate wins; with no success anywhere the
    last iterate is returned flagged unsuccessful.
    """
    if net.head != "softmax":
        raise ValueError("carlini_l2 attacks a softmax classifier")
    y = int(y)
    x0 = np.asarray(x, dtype=np.float32)
    w0 = np.arctanh(np.clip(2.0 * x0.astype(np.float64) - 1.0,
                            -_ATANH_CLAMP, _ATANH_CLAMP)).astype(np.float32)

    def evaluate(w):
        x_adv = (np.tanh(w) + 1.0) / 2.0
        acts = nn.forward(net, x_adv[None])
        logits = acts[-2][0].astype(np.float64)
        zy = logits[y]
        masked = logits.copy()
        masked[y] = -np.inf
        j = int(masked.argmax())
        margin = masked[j] - zy
        l2 = float(((x_adv - x0).astype(np.float64) ** 2).sum())
        return x_adv, acts, j, margin, l2

    lower, upper = 0.0, 1e10
    c = float(initial_const)
    best_adv, best_l2, best_c = None, np.inf, c
    last_adv, last_l2 = x0.copy(), 0.0

    for _ in range(binary_search_steps):
        w = w0.copy()
        velocity = np.zeros_like(w)
        succeeded = False
        for it in range(max_inner_iter + 1):
            x_adv, acts, j, margin, l2 = evaluate(w)
            last_adv, last_l2 = x_adv, l2
            if margin >= kappa:
                succeeded = True
                if l2 < best_l2:
                    best_adv, best_l2, best_c = x_adv.copy(), l2, c
            if it == max_inner_iter:
                break
            grad = 2.0 * (x_adv - x0)
            if -margin + kappa > 0:  # hinge active
                inject = np.zeros((1, net.num_outputs), dtype=np.float32)
                inject[0, y] = c
                inject[0, j] = -c
                _, gi = nn.backward(net, acts, inject, wrt_logits=True)
                grad = grad + gi[0]
            dw = grad * (1.0 - np.tanh(w) ** 2) / 2.0
            velocity = inner_momentum * velocity + dw
            w = w - np.float32(inner_lr) * velocity
        if succeeded:
            upper = min(upper, c)
            c = (lower + upper) / 2.0
        else:
            lower = max(lower, c)
            c = (lower + upper) / 2.0 if upper < 1e9 else c * 10.0

    if best_adv is None:
        return CarliniResult(x_adv=last_adv.astype(np.float32), success=False,
                             l2=last_l2, const=c)
    return CarliniResult(x_adv=best_adv.astype(np.float32), success=True,
                         l2=best_l2, const=best_c)


@dataclass
class AdversarialBatch:
    """Originals, perturbed images, and per-example attack bookkeeping."""

    originals: np.ndarray
    perturbed: np.ndarray
    labels: np.ndarray
    fooled: np.ndarray  # baseline label != true label, per example
    attack_kind: str
    attack_params: dict = field(default_factory=dict)
    l2_norms: np.ndarray = None
    linf_norms: np.ndarray = None

    def __len__(self):
        return self.originals.shape[0]


def select_correctly_classified(net, images, labels, n=None):
    """Indices of the first ``n`` examples the classifier gets right."""
    preds = predict_label(net, np.asarray(images, dtype=np.float32))
    idx = np.flatnonzero(preds == np.asarray(labels))
    return idx if n is None else idx[:n]


def run_attack(net, images, labels, config, *, log=None):
    """Apply one attack to every example; returns an AdversarialBatch."""
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels)
    perturbed = np.empty_like(images)
    for i in range(images.shape[0]):
        x, y = images[i], int(labels[i])
        if config.kind == "fgsm":
            perturbed[i] = fgsm(net, x, y, config.epsilon, config.r)
        elif config.kind == "deepfool":
            perturbed[i] = deepfool_linf(net, x, true_label=y,
                                         max_iter=config.max_iter,
                                         overshoot=config.overshoot).x_adv
        else:
            perturbed[i] = carlini_l2(
                net, x, y, config.kappa,
                binary_search_steps=config.binary_search_steps,
                max_inner_iter=config.max_inner_iter,
                inner_lr=config.inner_lr,
                initial_const=config.initial_const,
                inner_momentum=config.inner_momentum).x_adv
        if log is not None and (i + 1) % 50 == 0:
            log(f"{config.describe()}: {i + 1}/{images.shape[0]} examples")

    diff = (perturbed - images).reshape(images.shape[0], -1)
    fooled = predict_label(net, perturbed) != labels
    return AdversarialBatch(
        originals=images,
        perturbed=perturbed,
        labels=labels.astype(np.int64),
        fooled=fooled,
        attack_kind=config.kind,
        attack_params=config.relevant_params(),
        l2_norms=np.sqrt((diff.astype(np.float64) ** 2).sum(axis=1)),
        linf_norms=np.abs(diff).max(axis=1).astype(np.float64),
    )


def save_adversarial_batch(batch, dirpath):
    """Write a batch as a directory: raw tensors + JSON metadata."""
    os.makedirs(dirpath, exist_ok=True)
    np.save(os.path.join(dirpath, "originals.npy"), batch.originals)
    np.save(os.path.join(dirpath, "perturbed.npy"), batch.perturbed)
    meta = {
        "format_version": 1,
        "attack_kind": batch.attack_kind,
        "attack_params": batch.attack_params,
        "n": len(batch),
        "labels": batch.labels.tolist(),
        "fooled": batch.fooled.astype(bool).tolist(),
        "l2_norms": [float(v) for v in batch.l2_norms],
        "linf_norms": [float(v) for v in batch.linf_norms],
    }
    with open(os.path.join(dirpath, "metadata.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_adversarial_batch(dirpath):
    originals = np.load(os.path.join(dirpath, "originals.npy"))
    perturbed = np.load(os.path.join(dirpath, "perturbed.npy"))
    with open(os.path.join(dirpath, "metadata.json")) as f:
        meta = json.load(f)
    return AdversarialBatch(
        originals=originals,
        perturbed=perturbed,
        labels=np.asarray(meta["labels"], dtype=np.int64),
        fooled=np.asarray(meta["fooled"], dtype=bool),
        attack_kind=meta["attack_kind"],
        attack_params=meta["attack_params"],
        l2_norms=np.asarray(meta["l2_norms"], dtype=np.float64),
        linf_norms=np.asarray(meta["linf_norms"], dtype=np.float64),
    )
