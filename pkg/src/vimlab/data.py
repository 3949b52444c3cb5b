"""MNIST IDX ingestion and synthetic datasets."""

from __future__ import annotations

import gzip
import hashlib
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_DIR_ENV = "VIMLAB_DATA_DIR"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    split: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2 or len(self.images) != len(self.labels):
            raise ContractError(
                f"images {self.images.shape} and labels {self.labels.shape} do not line up"
            )

    def __len__(self):
        return len(self.labels)

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def head(self, n):
        prov = dict(self.provenance, subsample=int(n))
        return Dataset(self.images[:n], self.labels[:n], self.split, prov)


def _read_bytes(path):
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_header(raw, expected_magic, ndims, path):
    if len(raw) < 4 + 4 * ndims:
        raise FormatError(f"{path}: header truncated", offset=len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(
            f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0
        )
    dims = struct.unpack(f">{ndims}I", raw[4 : 4 + 4 * ndims])
    return dims, 4 + 4 * ndims


def load_idx_images(path):
    """Raw pixel bytes as a uint8 array of shape (n, rows, cols)."""
    raw = _read_bytes(path)
    (n, rows, cols), start = _parse_header(raw, IMAGE_MAGIC, 3, path)
    need = n * rows * cols
    if len(raw) - start < need:
        raise FormatError(
            f"{path}: expected {need} pixel bytes, found {len(raw) - start}", offset=len(raw)
        )
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=start).reshape(n, rows, cols)


def load_idx_labels(path):
    raw = _read_bytes(path)
    (n,), start = _parse_header(raw, LABEL_MAGIC, 1, path)
    if len(raw) - start < n:
        raise FormatError(f"{path}: expected {n} labels, found {len(raw) - start}", offset=len(raw))
    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=start)
    bad = np.flatnonzero(labels >= 10)
    if bad.size:
        raise FormatError(f"{path}: label {labels[bad[0]]} out of range", offset=start + int(bad[0]))
    return labels


def normalize(raw_images, labels, split="train", provenance=None):
    """Scale bytes to [0, 1] and flatten each image row-major."""
    raw_images = np.asarray(raw_images, dtype=np.uint8)
    images = raw_images.reshape(len(raw_images), -1).astype(np.float64) / 255.0
    return Dataset(images, np.asarray(labels, dtype=np.int64), split, provenance or {})


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def resolve_data_dir(data_dir=None):
    data_dir = data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise FileNotFoundError(f"no MNIST directory given (pass --data-dir or set {DATA_DIR_ENV})")
    return data_dir


def _find(data_dir, name):
    for candidate in (name, name + ".gz"):
        p = os.path.join(data_dir, candidate)
        if os.path.exists(p):
            return p
    raise FileNotFoundError(f"{name}[.gz] not found in {data_dir}")


def load_mnist(split, data_dir=None):
    data_dir = resolve_data_dir(data_dir)
    img_name, lbl_name = MNIST_FILES[split]
    img_path, lbl_path = _find(data_dir, img_name), _find(data_dir, lbl_name)
    raw = load_idx_images(img_path)
    labels = load_idx_labels(lbl_path)
    if len(raw) != len(labels):
        raise FormatError(f"{img_path} has {len(raw)} images but {lbl_path} has {len(labels)} labels")
    prov = {
        "images": os.path.abspath(img_path),
        "labels": os.path.abspath(lbl_path),
        "images_sha256": sha256(img_path),
        "labels_sha256": sha256(lbl_path),
    }
    return normalize(raw, labels, split, prov)


def synthetic_blobs(classes=4, per_class=250, separation=6.0, dim=20, seed=0, split="train"):
    """Isotropic unit-variance Gaussian classes mapped affinely into [0, 1].

    Class ``c`` is centred at ``separation * e_c`` so every pair of means is
    ``separation * sqrt(2)`` apart.  Coordinates pass through the recorded
    map ``u = (x - lo) / (hi - lo)`` and are clipped to [0, 1].
    """
    if dim < classes:
        raise ContractError(f"dim={dim} must be at least classes={classes}")
    rng = np.random.default_rng(seed)
    means = separation * np.eye(classes, dim)
    labels = np.repeat(np.arange(classes), per_class)
    x = means[labels] + rng.standard_normal((len(labels), dim))
    lo, hi = -5.0, separation + 5.0
    images = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    prov = {
        "synthetic": "blobs",
        "classes": classes,
        "per_class": per_class,
        "separation": separation,
        "dim": dim,
        "seed": seed,
        "affine_lo": lo,
        "affine_hi": hi,
    }
    return Dataset(images, labels, split, prov)


def blobs_split(classes=4, per_class=250, test_per_class=250, separation=6.0, dim=20, seed=0):
    """Train and test sets drawn from the same class means with disjoint seeds."""
    ss = np.random.SeedSequence(seed).spawn(2)
    train = synthetic_blobs(classes, per_class, separation, dim, int(ss[0].generate_state(1)[0]), "train")
    test = synthetic_blobs(classes, test_per_class, separation, dim, int(ss[1].generate_state(1)[0]), "test")
    return train, test
