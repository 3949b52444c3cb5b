import gzip
import os
import struct

import numpy as np
import pytest

from vimlab.data import (
    DATA_DIR_ENV, IMAGE_MAGIC, LABEL_MAGIC, blobs_split, load_idx_images, load_idx_labels, load_mnist,
    normalize, resolve_data_dir, sha256, synthetic_blobs,
)
from vimlab.errors import FormatError


def _write_images(path, pixels, magic=IMAGE_MAGIC):
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, rows, cols = pixels.shape
    path.write_bytes(struct.pack(">IIII", magic, n, rows, cols) + pixels.tobytes())
    return path


def _write_labels(path, labels, magic=LABEL_MAGIC):
    labels = np.asarray(labels, dtype=np.uint8)
    path.write_bytes(struct.pack(">II", magic, len(labels)) + labels.tobytes())
    return path


def test_single_zero_image(tmp_path):
    raw = load_idx_images(_write_images(tmp_path / "img", np.zeros((1, 28, 28))))
    assert raw.shape == (1, 28, 28) and not raw.any()


def test_image_loader_rejects_label_magic(tmp_path):
    p = _write_images(tmp_path / "img", np.zeros((1, 28, 28)), magic=LABEL_MAGIC)
    with pytest.raises(FormatError) as exc:
        load_idx_images(p)
    assert exc.value.offset == 0


def test_truncated_images(tmp_path):
    p = _write_images(tmp_path / "img", np.zeros((2, 28, 28)))
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(FormatError) as exc:
        load_idx_images(p)
    assert exc.value.offset == 16 + 2 * 784 - 5


def test_truncated_header(tmp_path):
    p = tmp_path / "img"
    p.write_bytes(struct.pack(">II", IMAGE_MAGIC, 1))
    with pytest.raises(FormatError):
        load_idx_images(p)


def test_labels_round_trip(tmp_path):
    assert list(load_idx_labels(_write_labels(tmp_path / "lbl", [0, 1, 2]))) == [0, 1, 2]


def test_label_out_of_range(tmp_path):
    with pytest.raises(FormatError) as exc:
        load_idx_labels(_write_labels(tmp_path / "lbl", [3, 10, 1]))
    assert exc.value.offset == 9


def test_label_loader_rejects_image_magic(tmp_path):
    with pytest.raises(FormatError):
        load_idx_labels(_write_labels(tmp_path / "lbl", [1], magic=IMAGE_MAGIC))


def test_gzip_files(tmp_path):
    p = _write_labels(tmp_path / "lbl", [4, 5])
    gz = tmp_path / "lbl.gz"
    gz.write_bytes(gzip.compress(p.read_bytes()))
    assert list(load_idx_labels(gz)) == [4, 5]


def test_normalize_values_and_layout():
    raw = np.zeros((1, 28, 28), dtype=np.uint8)
    raw[0, 0, 0], raw[0, 0, 1], raw[0, 1, 0] = 255, 128, 7
    ds = normalize(raw, [3])
    assert ds.images.shape == (1, 784)
    assert ds.images[0, 0] == 1.0 and ds.images[0, 1] == 128 / 255 and ds.images[0, 28] == 7 / 255
    assert ds.images[0, 2] == 0.0
    assert round(128 / 255, 5) == 0.50196


def test_normalize_is_injective_on_bytes():
    ds = normalize(np.arange(256, dtype=np.uint8).reshape(1, 16, 16), [0])
    assert len(np.unique(ds.images)) == 256
    assert ds.images.min() == 0.0 and ds.images.max() == 1.0


def test_load_from_directory_and_env(tmp_path, monkeypatch):
    r = np.random.default_rng(0)
    px = r.integers(0, 256, (5, 28, 28))
    _write_images(tmp_path / "t10k-images-idx3-ubyte", px)
    _write_labels(tmp_path / "t10k-labels-idx1-ubyte", [0, 1, 2, 3, 9])
    monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path))
    ds = load_mnist("test")
    assert len(ds) == 5 and ds.split == "test"
    np.testing.assert_array_equal(ds.images, px.reshape(5, -1) / 255.0)
    assert ds.provenance["images_sha256"] == sha256(tmp_path / "t10k-images-idx3-ubyte")
    # loading twice gives the same bytes and checksum
    again = load_mnist("test")
    assert again.images.tobytes() == ds.images.tobytes()


def test_mismatched_counts(tmp_path):
    _write_images(tmp_path / "t10k-images-idx3-ubyte", np.zeros((3, 28, 28)))
    _write_labels(tmp_path / "t10k-labels-idx1-ubyte", [0, 1])
    with pytest.raises(FormatError):
        load_mnist("test", tmp_path)


def test_missing_directory(monkeypatch):
    monkeypatch.delenv(DATA_DIR_ENV, raising=False)
    with pytest.raises(FileNotFoundError):
        resolve_data_dir(None)


MNIST_DIR = os.environ.get(DATA_DIR_ENV) or "/root/data/mnist"
has_mnist = os.path.exists(os.path.join(MNIST_DIR, "t10k-labels-idx1-ubyte")) or os.path.exists(
    os.path.join(MNIST_DIR, "t10k-labels-idx1-ubyte.gz")
)


@pytest.mark.skipif(not has_mnist, reason="MNIST files not available")
def test_official_mnist_counts():
    train, test = load_mnist("train", MNIST_DIR), load_mnist("test", MNIST_DIR)
    assert len(train) == 60000 and len(test) == 10000
    assert train.images.shape == (60000, 784)
    assert set(np.unique(test.labels)) == set(range(10))
    assert 0.0 <= train.images.min() and train.images.max() <= 1.0


# -- synthetic blobs ------------------------------------------------------------


def test_blobs_deterministic_and_in_box():
    a, b = synthetic_blobs(seed=3), synthetic_blobs(seed=3)
    assert a.images.tobytes() == b.images.tobytes()
    assert a.images.min() >= 0 and a.images.max() <= 1
    assert not np.array_equal(a.images, synthetic_blobs(seed=4).images)


def test_blobs_separation_zero_identical_classes():
    ds = synthetic_blobs(classes=3, per_class=4000, separation=0.0, dim=5, seed=0)
    means = np.array([ds.images[ds.labels == c].mean(0) for c in range(3)])
    # standard error of a per-class coordinate mean is at most 1/(10*sqrt(4000))
    assert np.abs(means - means.mean(0)).max() < 4 * 0.1 / np.sqrt(4000)


def test_blobs_nearest_centroid_accuracy():
    ds = synthetic_blobs(classes=4, per_class=2500, separation=6.0, dim=20, seed=1)
    lo, hi = ds.provenance["affine_lo"], ds.provenance["affine_hi"]
    centroids = (6.0 * np.eye(4, 20) - lo) / (hi - lo)
    d = ((ds.images[:, None, :] - centroids[None]) ** 2).sum(-1)
    assert np.mean(d.argmin(1) == ds.labels) >= 0.999
    means = 6.0 * np.eye(4, 20)
    pair = np.linalg.norm(means[:, None] - means[None], axis=-1)
    assert pair[~np.eye(4, dtype=bool)].min() >= 6.0


def test_blobs_split_disjoint_draws():
    train, test = blobs_split(seed=0)
    assert train.split == "train" and test.split == "test"
    assert not np.array_equal(train.images, test.images)
