"""Dataset ingestion and random/noisy input generators.

The MNIST loader reads the standard IDX files (big-endian magic 2051
for images, 2049 for labels), plain or gzip-compressed, and scales
pixels from [0,255] bytes to [0,1] float32. Every tensor leaving this
module satisfies pixel in [0,1].
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


class IdxFormatError(ValueError):
    """Malformed IDX file; message names the file and byte offset."""


@dataclass
class LabeledImageSet:
    images: np.ndarray  # (n, 28, 28, 1) float32 in [0, 1]
    labels: np.ndarray  # (n,) int64 in [0, 10)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.images)

    def subset(self, idx):
        return LabeledImageSet(images=self.images[idx],
                               labels=self.labels[idx])


def _open_maybe_gzip(path):
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_be32(f, path, offset):
    data = f.read(4)
    if len(data) != 4:
        raise IdxFormatError(f"{path}: truncated header at offset {offset}")
    return struct.unpack(">i", data)[0], offset + 4


def load_idx_images(path):
    """Raw uint8 image array (n, rows, cols) from an IDX3 file."""
    with _open_maybe_gzip(path) as f:
        offset = 0
        magic, offset = _read_be32(f, path, offset)
        if magic != IMAGE_MAGIC:
            raise IdxFormatError(
                f"{path}: bad magic {magic} at offset 0 (want {IMAGE_MAGIC})")
        count, offset = _read_be32(f, path, offset)
        rows, offset = _read_be32(f, path, offset)
        cols, offset = _read_be32(f, path, offset)
        payload = f.read()
    expected = count * rows * cols
    if len(payload) != expected:
        raise IdxFormatError(
            f"{path}: payload is {len(payload)} bytes at offset {offset}, "
            f"header declares {expected} ({count}x{rows}x{cols})")
    return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)


def load_idx_labels(path):
    """Raw uint8 label array (n,) from an IDX1 file."""
    with _open_maybe_gzip(path) as f:
        offset = 0
        magic, offset = _read_be32(f, path, offset)
        if magic != LABEL_MAGIC:
            raise IdxFormatError(
                f"{path}: bad magic {magic} at offset 0 (want {LABEL_MAGIC})")
        count, offset = _read_be32(f, path, offset)
        payload = f.read()
    if len(payload) != count:
        raise IdxFormatError(
            f"{path}: payload is {len(payload)} bytes at offset {offset}, "
            f"header declares {count}")
    return np.frombuffer(payload, dtype=np.uint8)


def _find(dirpath, name):
    for candidate in (name, name + ".gz"):
        path = os.path.join(dirpath, candidate)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(
        f"{dirpath}: missing {name} (or {name}.gz)")


def _to_image_batch(raw, path):
    if raw.shape[1:] != (28, 28):
        raise IdxFormatError(
            f"{path}: images are {raw.shape[1]}x{raw.shape[2]}, expected 28x28")
    return (raw.astype(np.float32) / 255.0)[..., None]


def load_mnist(dirpath):
    """Load the four standard IDX files; returns (train, test) sets."""
    pairs = []
    for img_name, lab_name in ((TRAIN_IMAGES, TRAIN_LABELS),
                               (TEST_IMAGES, TEST_LABELS)):
        img_path = _find(dirpath, img_name)
        lab_path = _find(dirpath, lab_name)
        raw = load_idx_images(img_path)
        labels = load_idx_labels(lab_path)
        if len(raw) != len(labels):
            raise IdxFormatError(
                f"{img_path}: {len(raw)} images but {lab_path} has "
                f"{len(labels)} labels")
        pairs.append(LabeledImageSet(images=_to_image_batch(raw, img_path),
                                     labels=labels.astype(np.int64)))
    return pairs[0], pairs[1]


def random_inputs(n, seed, shape=(28, 28, 1)):
    """i.i.d. uniform [0,1] pixel batches, deterministic in the seed."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(n, *shape)).astype(np.float32)


def noisy_variants(images, k=100, seed=0, noise_half_range=0.5):
    """k noisy copies per image: clip(image + U[-h, h] per pixel, 0, 1).

    Output order is image-major: variants of image i occupy rows
    [i*k, (i+1)*k). 100 images at k=100 give the usual 10,000 examples.
    """
    images = np.asarray(images, dtype=np.float32)
    rng = np.random.default_rng(seed)
    out = np.repeat(images, k, axis=0)
    noise = rng.uniform(-noise_half_range, noise_half_range,
                        size=out.shape).astype(np.float32)
    return np.clip(out + noise, 0.0, 1.0)
