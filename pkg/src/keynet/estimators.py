"""Scikit-learn style estimator facade.

Thin wrappers over the functional core so the classifier and the
detector plug into the usual fit/predict ecosystem (get_params, clone,
pipelines, cross-validation on the classifier, ...). Inputs may be flat
(n, 784) feature matrices or image batches; see validation helpers.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import models
from .codebook import generate_codebook
from .evaluate import REJECTED, detect_batch
from .models import TrainConfig, build_network, derive_key_network, train
from .validation import check_image_batch, check_labels


class BaselineClassifier(BaseEstimator, ClassifierMixin):
    """Softmax CNN classifier with one of the built-in architectures.

    Parameters mirror TrainConfig; ``arch`` selects the layer stack
    ("baseline1" .. "baseline4", or just "1" .. "4").
    """

    def __init__(self, arch="baseline1", learning_rate=0.02, momentum=0.9,
                 batch_size=64, epochs=10, seed=0):
        self.arch = arch
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    def _train_config(self):
        return TrainConfig(learning_rate=self.learning_rate,
                           momentum=self.momentum,
                           batch_size=self.batch_size,
                           epochs=self.epochs,
                           seed=self.seed)

    def fit(self, X, y):
        X = check_image_batch(X)
        y = check_labels(y, n=len(X))
        self.classes_ = np.arange(10, dtype=np.int64)
        self.network_ = build_network(self.arch, seed=self.seed)
        self.history_ = train(self.network_, X, y, self._train_config())
        return self

    def predict(self, X):
        self._check_fitted()
        return models.predict_label(self.network_, check_image_batch(X))

    def predict_proba(self, X):
        self._check_fitted()
        from .nn import forward

        return forward(self.network_, check_image_batch(X))[-1]

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise ValueError("this BaselineClassifier is not fitted yet")


class KeyNetworkDetector(BaseEstimator, ClassifierMixin):
    """Code-regression detector derived from a trained baseline.

    ``fit`` generates the secret codebook (seeded by ``codebook_seed``,
    falling back to ``seed``), re-heads the baseline for code regression
    and fine-tunes it. ``predict`` returns class labels with ``-1`` for
    rejected (adversarial) inputs; ``score`` is exact-code-match
    accuracy, so rejections count as errors on normal data.

    ``baseline`` may be a fitted BaselineClassifier, a raw Network, or
    None, in which case fit() trains a fresh baseline1 first with the
    same hyperparameters.
    """

    def __init__(self, baseline=None, code_length=30, tau=0,
                 learning_rate=1.0, momentum=0.0, batch_size=64, epochs=10,
                 seed=0, codebook_seed=None):
        self.baseline = baseline
        self.code_length = code_length
        self.tau = tau
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.codebook_seed = codebook_seed

    def _resolve_baseline(self, X, y):
        if self.baseline is None:
            clf = BaselineClassifier(seed=self.seed,
                                     batch_size=self.batch_size,
                                     epochs=self.epochs)
            clf.fit(X, y)
            return clf.network_
        if isinstance(self.baseline, BaselineClassifier):
            self.baseline._check_fitted()
            return self.baseline.network_
        return self.baseline  # assume a trained Network

    def fit(self, X, y):
        X = check_image_batch(X)
        y = check_labels(y, n=len(X))
        baseline_net = self._resolve_baseline(X, y)
        cb_seed = self.seed if self.codebook_seed is None else self.codebook_seed
        self.codebook_ = generate_codebook(baseline_net.num_outputs,
                                           self.code_length, cb_seed)
        self.network_ = derive_key_network(baseline_net, self.codebook_,
                                           seed=self.seed)
        cfg = TrainConfig(learning_rate=self.learning_rate,
                          momentum=self.momentum, batch_size=self.batch_size,
                          epochs=self.epochs, seed=self.seed,
                          optimizer="sgd-momentum" if self.momentum else "sgd")
        self.history_ = train(self.network_, X, y, cfg,
                              codebook=self.codebook_)
        self.classes_ = np.arange(10, dtype=np.int64)
        return self

    def predict(self, X):
        """Labels with REJECTED (-1) marking detected adversarial inputs."""
        self._check_fitted()
        return detect_batch(self.network_, self.codebook_,
                            check_image_batch(X), self.tau)

    def predict_code(self, X):
        self._check_fitted()
        return models.predict_code(self.network_, check_image_batch(X))

    def reject_mask(self, X):
        return self.predict(X) == REJECTED

    def score(self, X, y):
        """Exact-match accuracy: fraction classified as the true label."""
        y = check_labels(np.asarray(y), n=len(X))
        return float((self.predict(X) == y).mean())

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise ValueError("this KeyNetworkDetector is not fitted yet")
