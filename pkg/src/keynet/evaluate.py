"""Detection rule, evaluation metrics, code-length sweep, overlap analysis.

The detector is input-only: it sees raw images, never attack metadata.
An input is Classified(label) when the binarized output code matches the
label's signature (within Hamming tolerance tau, ambiguity rejected),
otherwise Rejected — and Rejected is the adversarial verdict.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .codebook import binarize, generate_codebook
from .models import accuracy as baseline_accuracy
from .models import derive_key_network, predict_code, predict_label, train

REJECTED = -1  # batch-level verdict sentinel


@dataclass(frozen=True)
class Verdict:
    """Classified(label) or Rejected; rejection means adversarial."""

    label: int | None

    @property
    def rejected(self):
        return self.label is None

    @staticmethod
    def classified(label):
        return Verdict(label=int(label))

    @staticmethod
    def rejected_verdict():
        return Verdict(label=None)


def _match_codes(cb, codes, tau):
    """Vectorized tolerant matching of an (n, t) code batch against the
    codebook rows; returns int labels with REJECTED for no/ambiguous
    match."""
    dists = (codes[:, None, :] != cb.rows[None, :, :]).sum(axis=2)
    dmin = dists.min(axis=1)
    ties = (dists == dmin[:, None]).sum(axis=1)
    labels = dists.argmin(axis=1)
    out = np.where((dmin <= tau) & (ties == 1), labels, REJECTED)
    return out.astype(np.int64)


def detect_batch(knet, cb, images, tau=0):
    """Verdicts for a batch: label array with REJECTED (-1) entries."""
    if knet.num_outputs != cb.t:
        raise ValueError(
            f"key network outputs {knet.num_outputs} bits but codebook "
            f"rows have {cb.t}")
    out = predict_code(knet, np.asarray(images, dtype=np.float32))
    return _match_codes(cb, binarize(out), tau)


def detect(knet, cb, x, tau=0):
    """Single-input verdict; see detect_batch."""
    x = np.asarray(x, dtype=np.float32)
    label = int(detect_batch(knet, cb, x[None], tau)[0])
    return Verdict.rejected_verdict() if label == REJECTED \
        else Verdict.classified(label)


def eval_accuracy(knet, cb, images, labels, tau=0):
    """Fraction of normal examples classified as their true label.

    Rejections and wrong labels both count as errors: correctness means
    the output code matches the true class signature.
    """
    verdicts = detect_batch(knet, cb, images, tau)
    return float((verdicts == np.asarray(labels)).mean())


def eval_fooling_rate(baseline, adv):
    """Fraction of adversarial examples that flip the baseline's label."""
    preds = predict_label(baseline, adv.perturbed)
    return float((preds != adv.labels).mean())


def eval_detection_rate(knet, cb, adv, tau=0):
    """Fraction of adversarial examples either rejected or still
    classified correctly; only Classified(wrong label) escapes."""
    verdicts = detect_batch(knet, cb, adv.perturbed, tau)
    ok = (verdicts == REJECTED) | (verdicts == adv.labels)
    return float(ok.mean())


def codebook_fingerprint(cb):
    """Hash standing in for the secret key in reports (the seed and rows
    never leave the codebook file)."""
    h = hashlib.sha256()
    h.update(f"{cb.m}:{cb.t}:{cb.seed}".encode())
    return h.hexdigest()[:16]


@dataclass
class AttackRow:
    attack: str
    params: dict
    n: int
    fooling_rate: float
    detection_rate: float


@dataclass
class EvalReport:
    accuracy: float | None
    tau: int
    n_normal: int
    codebook_fingerprint: str
    attack_rows: list = field(default_factory=list)

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "tau": self.tau,
            "n_normal": self.n_normal,
            "codebook_fingerprint": self.codebook_fingerprint,
            "attacks": [{
                "attack": r.attack,
                "params": r.params,
                "n": r.n,
                "fooling_rate": r.fooling_rate,
                "detection_rate": r.detection_rate,
            } for r in self.attack_rows],
        }

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    # stable CSV schema; documented in the README
    CSV_FIELDS = ("attack", "params", "n", "fooling_rate", "detection_rate")

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.CSV_FIELDS)
            for r in self.attack_rows:
                params = ";".join(f"{k}={v}" for k, v in sorted(r.params.items()))
                w.writerow([r.attack, params, r.n,
                            f"{r.fooling_rate:.6f}", f"{r.detection_rate:.6f}"])


def evaluate_attacks(baseline, knet, cb, batches, *, tau=0,
                     normal_images=None, normal_labels=None):
    """Assemble an EvalReport from adversarial batches (+ optional normal
    test data for the predictive-accuracy column).

    With ``baseline=None`` the fooling rates come from the per-example
    flags stored at generation time instead of being recomputed.
    """
    acc = None
    n_normal = 0
    if normal_images is not None:
        acc = eval_accuracy(knet, cb, normal_images, normal_labels, tau)
        n_normal = len(normal_images)
    rows = []
    for b in batches:
        fooling = (float(b.fooled.mean()) if baseline is None
                   else eval_fooling_rate(baseline, b))
        rows.append(AttackRow(attack=b.attack_kind, params=b.attack_params,
                              n=len(b), fooling_rate=fooling,
                              detection_rate=eval_detection_rate(knet, cb, b,
                                                                 tau)))
    return EvalReport(accuracy=acc, tau=tau, n_normal=n_normal,
                      codebook_fingerprint=codebook_fingerprint(cb),
                      attack_rows=rows)


@dataclass
class SweepPoint:
    code_length: int
    accuracy: float
    detection_rates: dict  # attack description -> rate
    fooling_rates: dict


def code_length_sweep(baseline, lengths, train_set, test_set, attack_configs,
                      train_cfg, *, seed=0, n_attack=200, tau=0,
                      attack_fn=None, log=None):
    """Retrain and evaluate a key network for each code length.

    Every length starts from the same trained baseline (controls for
    baseline variance) with a fresh codebook seeded seed^t, retrains with
    ``train_cfg``, and measures predictive accuracy plus per-attack
    detection rates on adversarial examples built from the first
    ``n_attack`` correctly classified test images.

    ``attack_fn(config) -> AdversarialBatch`` may be injected so drivers
    can reuse adversarial batches across lengths (the attacks target the
    baseline only, so they are independent of t).
    """
    from .attacks import run_attack, select_correctly_classified

    if attack_fn is None:
        idx = select_correctly_classified(baseline, test_set.images,
                                          test_set.labels, n_attack)
        def attack_fn(config):
            return run_attack(baseline, test_set.images[idx],
                              test_set.labels[idx], config, log=log)

    batches = [(cfg_a, attack_fn(cfg_a)) for cfg_a in attack_configs]

    points = []
    for t in lengths:
        cb = generate_codebook(baseline.num_outputs, t, seed ^ int(t))
        knet = derive_key_network(baseline, cb, seed=seed ^ int(t))
        train(knet, train_set.images, train_set.labels, train_cfg,
              codebook=cb, log=log)
        acc = eval_accuracy(knet, cb, test_set.images, test_set.labels, tau)
        det = {}
        fool = {}
        for cfg_a, batch in batches:
            det[cfg_a.describe()] = eval_detection_rate(knet, cb, batch, tau)
            fool[cfg_a.describe()] = eval_fooling_rate(baseline, batch)
        points.append(SweepPoint(code_length=int(t), accuracy=acc,
                                 detection_rates=det, fooling_rates=fool))
        if log is not None:
            log(f"sweep t={t}: accuracy={acc:.4f} detection={det}")
    return points


SWEEP_CSV_FIELDS = ("code_length", "accuracy", "attack", "fooling_rate",
                    "detection_rate")


def write_sweep_csv(points, path):
    """One row per (code length, attack); stable column set."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_CSV_FIELDS)
        for p in points:
            for attack, det in sorted(p.detection_rates.items()):
                w.writerow([p.code_length, f"{p.accuracy:.6f}", attack,
                            f"{p.fooling_rates[attack]:.6f}", f"{det:.6f}"])


def overlap_analysis(reference, others, inputs, *, knet=None, cb=None, tau=0):
    """How often other models repeat the reference model's labels.

    For each named model, counts inputs where its predicted label equals
    the reference prediction. The key network (if given) votes with its
    detection verdict: Rejected never overlaps.
    """
    inputs = np.asarray(inputs, dtype=np.float32)
    ref = predict_label(reference, inputs)
    counts = {}
    for name, net in others.items():
        counts[name] = int((predict_label(net, inputs) == ref).sum())
    if knet is not None:
        verdicts = detect_batch(knet, cb, inputs, tau)
        counts["knet"] = int(((verdicts != REJECTED) & (verdicts == ref)).sum())
    return counts


def eval_baseline_accuracy(net, images, labels):
    """Plain argmax accuracy of a softmax classifier."""
    return baseline_accuracy(net, images, labels)
