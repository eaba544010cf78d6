"""keynet: detecting adversarial examples with secret binary class codes.

Train a small image classifier, re-head it to regress onto a secret
random codebook, and reject any input whose binarized output code
matches no class signature.
"""

from . import attacks, codebook, data, evaluate, models, nn
from .attacks import AdversarialBatch, AttackConfig, carlini_l2, deepfool_linf, fgsm
from .codebook import Codebook, decode, encode, generate_codebook
from .estimators import BaselineClassifier, KeyNetworkDetector
from .evaluate import EvalReport, Verdict, detect, detect_batch
from .models import TrainConfig, build_network, derive_key_network, train

__version__ = "0.1.0"

__all__ = [
    "attacks", "codebook", "data", "evaluate", "models", "nn",
    "AdversarialBatch", "AttackConfig", "carlini_l2", "deepfool_linf", "fgsm",
    "Codebook", "decode", "encode", "generate_codebook",
    "BaselineClassifier", "KeyNetworkDetector",
    "EvalReport", "Verdict", "detect", "detect_batch",
    "TrainConfig", "build_network", "derive_key_network", "train",
    "__version__",
]
