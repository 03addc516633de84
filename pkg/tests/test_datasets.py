"""Dataset ingestion tests: IDX and CIFAR binary parsing against
hand-built files, normalization arithmetic, seeded splits, and the
synthetic shapes generator."""

import gzip
import os
import struct

import numpy as np
import pytest

from snncompress.errors import ConfigError, FormatError
from snncompress.pipeline.datasets import (Dataset, load_dataset,
                                           load_idx_digits, load_cifar10,
                                           normalize, read_cifar_batch,
                                           read_idx, split_train_val,
                                           synthetic_shapes)


# --- IDX files -----------------------------------------------------------

def write_idx(path, array):
    """Serialize a uint8 ndarray in the published IDX layout: two zero
    bytes, dtype code 0x08, ndim, big-endian uint32 dims, raw payload."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(bytes([0, 0, 0x08, array.ndim]))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.tobytes())


def test_idx_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    arr = rng.integers(0, 256, size=(7, 5, 4), dtype=np.uint8)
    p = str(tmp_path / "a.idx")
    write_idx(p, arr)
    np.testing.assert_array_equal(read_idx(p), arr)


def test_idx_roundtrip_gzipped(tmp_path):
    arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    raw = str(tmp_path / "b.idx")
    write_idx(raw, arr)
    gz = str(tmp_path / "b.idx.gz")
    with open(raw, "rb") as f, gzip.open(gz, "wb") as g:
        g.write(f.read())
    np.testing.assert_array_equal(read_idx(gz), arr)


def test_idx_bad_magic_reports_offset(tmp_path):
    p = str(tmp_path / "bad.idx")
    with open(p, "wb") as f:
        f.write(bytes([1, 0, 0x08, 1]) + struct.pack(">I", 0))
    with pytest.raises(FormatError, match="byte 0"):
        read_idx(p)


def test_idx_bad_dtype_code(tmp_path):
    p = str(tmp_path / "bad.idx")
    with open(p, "wb") as f:
        f.write(bytes([0, 0, 0x0D, 1]) + struct.pack(">I", 0))
    with pytest.raises(FormatError, match="dtype code"):
        read_idx(p)


def test_idx_truncated_payload_reports_offset(tmp_path):
    p = str(tmp_path / "short.idx")
    with open(p, "wb") as f:
        f.write(bytes([0, 0, 0x08, 1]) + struct.pack(">I", 10) + b"\x00" * 4)
    with pytest.raises(FormatError, match="payload has 4 bytes"):
        read_idx(p)


def test_idx_truncated_header(tmp_path):
    p = str(tmp_path / "tiny.idx")
    with open(p, "wb") as f:
        f.write(b"\x00\x00")
    with pytest.raises(FormatError, match="truncated header"):
        read_idx(p)


def make_digits_dir(tmp_path, n_train=40, n_test=10, seed=3):
    rng = np.random.default_rng(seed)
    root = str(tmp_path / "digits")
    os.makedirs(root)
    write_idx(os.path.join(root, "train-images-idx3-ubyte"),
              rng.integers(0, 256, (n_train, 28, 28), dtype=np.uint8))
    write_idx(os.path.join(root, "train-labels-idx1-ubyte"),
              rng.integers(0, 10, n_train, dtype=np.uint8))
    write_idx(os.path.join(root, "t10k-images-idx3-ubyte"),
              rng.integers(0, 256, (n_test, 28, 28), dtype=np.uint8))
    write_idx(os.path.join(root, "t10k-labels-idx1-ubyte"),
              rng.integers(0, 10, n_test, dtype=np.uint8))
    return root


def test_load_idx_digits(tmp_path):
    root = make_digits_dir(tmp_path)
    ds = load_idx_digits(root, seed=0)
    assert ds.input_shape == (1, 28, 28)
    assert ds.n_classes == 10
    # 90/10 split of 40
    assert ds.train_x.shape == (36, 1, 28, 28)
    assert ds.val_x.shape == (4, 1, 28, 28)
    assert ds.test_x.shape == (10, 1, 28, 28)
    assert ds.train_x.dtype == np.float32
    assert ds.train_x.min() >= -1.0 and ds.train_x.max() <= 1.0
    assert ds.train_y.dtype == np.int64
    assert set(np.unique(ds.train_y)) <= set(range(10))


def test_load_idx_digits_missing_file(tmp_path):
    root = make_digits_dir(tmp_path)
    os.remove(os.path.join(root, "t10k-labels-idx1-ubyte"))
    with pytest.raises(ConfigError, match="t10k-labels"):
        load_idx_digits(root)


# --- CIFAR binary batches ------------------------------------------------

def write_cifar_batch(path, images, labels):
    """Each record is 1 label byte + 3072 pixel bytes (published layout)."""
    rec = np.concatenate(
        [labels[:, None].astype(np.uint8),
         images.reshape(len(labels), -1).astype(np.uint8)], axis=1)
    assert rec.shape[1] == 3073
    with open(path, "wb") as f:
        f.write(rec.tobytes())


def test_cifar_batch_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    images = rng.integers(0, 256, (50, 3, 32, 32), dtype=np.uint8)
    labels = rng.integers(0, 10, 50, dtype=np.uint8)
    p = str(tmp_path / "batch.bin")
    write_cifar_batch(p, images, labels)
    x, y = read_cifar_batch(p)
    np.testing.assert_array_equal(x, images)
    np.testing.assert_array_equal(y, labels)


def test_cifar_record_size_rejected(tmp_path):
    p = str(tmp_path / "cut.bin")
    with open(p, "wb") as f:
        f.write(b"\x00" * (3073 * 2 - 5))
    with pytest.raises(FormatError, match="3073"):
        read_cifar_batch(p)


def test_cifar_label_out_of_range(tmp_path):
    images = np.zeros((3, 3, 32, 32), dtype=np.uint8)
    labels = np.array([0, 11, 2], dtype=np.uint8)
    p = str(tmp_path / "bad.bin")
    write_cifar_batch(p, images, labels)
    with pytest.raises(FormatError, match="label 11"):
        read_cifar_batch(p)


def test_load_cifar10(tmp_path):
    rng = np.random.default_rng(2)
    root = str(tmp_path / "cifar")
    os.makedirs(root)
    per = 20
    for i in range(1, 6):
        write_cifar_batch(os.path.join(root, f"data_batch_{i}.bin"),
                          rng.integers(0, 256, (per, 3, 32, 32), dtype=np.uint8),
                          rng.integers(0, 10, per, dtype=np.uint8))
    write_cifar_batch(os.path.join(root, "test_batch.bin"),
                      rng.integers(0, 256, (per, 3, 32, 32), dtype=np.uint8),
                      rng.integers(0, 10, per, dtype=np.uint8))
    ds = load_cifar10(root, seed=0)
    assert ds.input_shape == (3, 32, 32)
    assert ds.train_x.shape[0] + ds.val_x.shape[0] == 5 * per
    assert ds.val_x.shape[0] == 10
    assert ds.test_x.shape == (per, 3, 32, 32)


# --- normalization and split --------------------------------------------

def test_normalize_uint8_endpoints():
    x = normalize(np.array([0, 255, 127], dtype=np.uint8))
    assert x[0] == -1.0
    assert x[1] == 1.0
    assert abs(x[2] - (127 / 255 - 0.5) / 0.5) < 1e-7


def test_normalize_unit_floats():
    x = normalize(np.array([0.0, 0.5, 1.0], dtype=np.float32))
    np.testing.assert_allclose(x, [-1.0, 0.0, 1.0], atol=1e-7)


def test_split_sizes_and_partition():
    x = np.arange(100, dtype=np.float32).reshape(100, 1, 1, 1)
    y = np.arange(100)
    tx, ty, vx, vy = split_train_val(x, y, 0.1, seed=5)
    assert len(vx) == 10 and len(tx) == 90
    assert sorted(np.concatenate([ty, vy]).tolist()) == list(range(100))
    # labels ride with their images
    np.testing.assert_array_equal(tx[:, 0, 0, 0].astype(int), ty)


def test_split_seeded():
    x = np.zeros((50, 1, 2, 2), dtype=np.float32)
    y = np.arange(50)
    _, a, _, _ = split_train_val(x, y, 0.1, seed=1)
    _, b, _, _ = split_train_val(x, y, 0.1, seed=1)
    _, c, _, _ = split_train_val(x, y, 0.1, seed=2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_split_rejects_bad_fraction():
    x = np.zeros((4, 1, 1, 1), dtype=np.float32)
    with pytest.raises(ValueError):
        split_train_val(x, np.zeros(4), 0.0)
    with pytest.raises(ValueError):
        split_train_val(x, np.zeros(4), 1.0)


# --- synthetic shapes ----------------------------------------------------

def test_synthetic_deterministic():
    a = synthetic_shapes(30, seed=7)
    b = synthetic_shapes(30, seed=7)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    c = synthetic_shapes(30, seed=8)
    assert not np.array_equal(a[0], c[0])


def test_synthetic_prefix_property():
    """Sample i draws from its own stream, so growing n keeps old samples."""
    short = synthetic_shapes(10, seed=3)[0]
    long = synthetic_shapes(25, seed=3)[0]
    np.testing.assert_array_equal(long[:10], short)


def test_synthetic_labels_balanced():
    _, y = synthetic_shapes(40, n_classes=4, seed=0)
    counts = np.bincount(y, minlength=4)
    assert counts.tolist() == [10, 10, 10, 10]


def test_synthetic_value_range_and_shape():
    x, y = synthetic_shapes(12, n_classes=2, size=20, seed=1)
    assert x.shape == (12, 1, 20, 20)
    assert x.dtype == np.float32
    assert x.min() >= 0.0 and x.max() <= 1.0
    assert y.max() == 1


def test_synthetic_stream_tags_disjoint():
    a = synthetic_shapes(10, seed=4, stream_tag=0)[0]
    b = synthetic_shapes(10, seed=4, stream_tag=1)[0]
    assert not np.array_equal(a, b)


def test_synthetic_rejects_bad_class_count():
    with pytest.raises(ValueError):
        synthetic_shapes(4, n_classes=1)
    with pytest.raises(ValueError):
        synthetic_shapes(4, n_classes=9)


# --- dispatch ------------------------------------------------------------

def test_load_dataset_synthetic_spec():
    ds = load_dataset({"name": "synthetic", "n_train": 40, "n_test": 8,
                       "n_classes": 2, "size": 12, "seed": 5})
    assert isinstance(ds, Dataset)
    assert ds.name == "synthetic"
    assert ds.n_classes == 2
    assert ds.input_shape == (1, 12, 12)
    assert ds.train_x.shape[0] == 36 and ds.val_x.shape[0] == 4
    # normalized out of the generator's [0, 1] range
    assert ds.train_x.min() < -0.5


def test_load_dataset_unknown_name():
    with pytest.raises(ConfigError, match="unknown dataset"):
        load_dataset({"name": "imagenet"})


def test_load_dataset_unknown_option():
    with pytest.raises(ConfigError, match="unknown synthetic"):
        load_dataset({"name": "synthetic", "n_trian": 10})


def test_load_dataset_needs_path(monkeypatch):
    monkeypatch.delenv("SNNCOMPRESS_DATA", raising=False)
    with pytest.raises(ConfigError, match="needs a path"):
        load_dataset({"name": "mnist"})


def test_load_dataset_env_root(tmp_path, monkeypatch):
    root = make_digits_dir(tmp_path)
    monkeypatch.setenv("SNNCOMPRESS_DATA", root)
    ds = load_dataset({"name": "mnist"})
    assert ds.test_x.shape[0] == 10


def test_dataset_count_mismatch_rejected():
    x = np.zeros((3, 1, 2, 2), dtype=np.float32)
    with pytest.raises(ValueError, match="count mismatch"):
        Dataset("t", x, np.zeros(2), x, np.zeros(3), x, np.zeros(3), 2)
