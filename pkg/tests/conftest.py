"""Shared fixtures: synthetic digit data, trained networks, IDX writers.

The heavyweight fixtures (trained baseline / key network) are session
scoped so the attack, evaluation, and integration tests share one
training run.

MNIST-dependent acceptance tests look for the real IDX files via the
KEYNET_MNIST_DIR environment variable or ./data/mnist and skip with an
explicit reason when the dataset is not present (it cannot be downloaded
in the test sandbox).
"""

from __future__ import annotations

import os
import struct

import numpy as np
import pytest

from keynet import codebook as cbm
from keynet import models
from synthdigits import make_split

SYNTH_SEED = 1234


def mnist_location():
    candidates = []
    env = os.environ.get("KEYNET_MNIST_DIR")
    if env:
        candidates.append(env)
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    candidates.append(os.path.join(here, "data", "mnist"))
    for cand in candidates:
        if os.path.exists(os.path.join(cand, "train-images-idx3-ubyte")) or \
           os.path.exists(os.path.join(cand, "train-images-idx3-ubyte.gz")):
            return cand
    return None


MNIST_SKIP_REASON = (
    "MNIST IDX files not found (set KEYNET_MNIST_DIR or place them under "
    "./data/mnist); the test environment has no way to download them")


@pytest.fixture(scope="session")
def mnist_dir():
    location = mnist_location()
    if location is None:
        pytest.skip(MNIST_SKIP_REASON)
    return location


@pytest.fixture(scope="session")
def synth_split():
    return make_split(6000, 1500, SYNTH_SEED)


@pytest.fixture(scope="session")
def trained_baseline(synth_split):
    train_set, _ = synth_split
    net = models.build_network("baseline1", seed=0)
    cfg = models.TrainConfig(learning_rate=0.02, batch_size=64, epochs=2,
                             seed=0)
    models.train(net, train_set.images, train_set.labels, cfg)
    return net


@pytest.fixture(scope="session")
def codebook30():
    return cbm.generate_codebook(10, 30, seed=7)


@pytest.fixture(scope="session")
def trained_knet(synth_split, trained_baseline, codebook30):
    train_set, _ = synth_split
    knet = models.derive_key_network(trained_baseline, codebook30, seed=3)
    cfg = models.key_retrain_config(epochs=4, seed=1)
    models.train(knet, train_set.images, train_set.labels, cfg,
                 codebook=codebook30)
    return knet


# ------------------------------------------------------------ IDX helpers

def write_idx_images(path, images_uint8):
    images_uint8 = np.ascontiguousarray(images_uint8, dtype=np.uint8)
    n, rows, cols = images_uint8.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", 2051, n, rows, cols))
        f.write(images_uint8.tobytes())


def write_idx_labels(path, labels):
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", 2049, len(labels)))
        f.write(labels.tobytes())


def write_dataset_dir(dirpath, train_set, test_set):
    """Materialize two LabeledImageSets as a standard IDX directory."""
    os.makedirs(dirpath, exist_ok=True)
    for prefix, s in (("train", train_set), ("t10k", test_set)):
        imgs = np.round(s.images[..., 0] * 255.0).astype(np.uint8)
        write_idx_images(os.path.join(dirpath, f"{prefix}-images-idx3-ubyte"),
                         imgs)
        write_idx_labels(os.path.join(dirpath, f"{prefix}-labels-idx1-ubyte"),
                         s.labels)


@pytest.fixture(scope="session")
def synth_idx_dir(tmp_path_factory):
    """Small synthetic dataset written in MNIST IDX format (CLI tests)."""
    train_set, test_set = make_split(1200, 400, SYNTH_SEED + 50)
    dirpath = tmp_path_factory.mktemp("idxdata")
    write_dataset_dir(dirpath, train_set, test_set)
    return str(dirpath)
