"""Dataset ingestion: IDX images, CIFAR-10 binary batches, and a
built-in synthetic shapes corpus for hermetic desk-scale runs.

All loaders emit float32 images normalized to mean 0.5 / std 0.5 in the
unit range, i.e. pixel' = (pixel/255 - 0.5) / 0.5, landing in [-1, 1].
The train split is further divided 90/10 into train/validation by a
seeded permutation.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, FormatError
from ..rng import DATASET, SPLIT, rng_for

DATA_ROOT_ENV = "SNNCOMPRESS_DATA"


@dataclass
class Dataset:
    name: str
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    n_classes: int
    input_shape: tuple[int, int, int] = field(init=False)

    def __post_init__(self):
        self.input_shape = tuple(self.train_x.shape[1:])  # type: ignore[assignment]
        for x, y in ((self.train_x, self.train_y), (self.val_x, self.val_y),
                     (self.test_x, self.test_y)):
            if x.shape[0] != y.shape[0]:
                raise ValueError("image/label count mismatch")
            if x.ndim != 4:
                raise ValueError("images must be (N, C, H, W)")


def normalize(pixels: np.ndarray) -> np.ndarray:
    """uint8 [0,255] or float [0,1] pixels -> float32 in [-1, 1]."""
    x = pixels.astype(np.float32)
    if pixels.dtype == np.uint8:
        x /= 255.0
    return (x - 0.5) / 0.5


def split_train_val(x: np.ndarray, y: np.ndarray, val_fraction: float = 0.1,
                    seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Seeded 90/10 (by default) split; permutation independent of data."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie in (0, 1)")
    n = x.shape[0]
    order = rng_for(seed, SPLIT).permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    return x[train_idx], y[train_idx], x[val_idx], y[val_idx]


def _open_maybe_gzip(path: str):
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path: str) -> np.ndarray:
    """Parse one IDX file (optionally gzipped) into an ndarray.

    Layout: 2 zero bytes, a dtype code (0x08 = uint8), a dimension count,
    then big-endian uint32 sizes per dimension, then the payload.
    """
    with _open_maybe_gzip(path) as f:
        head = f.read(4)
        if len(head) < 4:
            raise FormatError(f"{path}: truncated header at byte {len(head)}")
        if head[0] != 0 or head[1] != 0:
            raise FormatError(f"{path}: bad magic {head[:2].hex()} at byte 0")
        if head[2] != 0x08:
            raise FormatError(f"{path}: unsupported dtype code 0x{head[2]:02x} at byte 2")
        ndim = head[3]
        if not 1 <= ndim <= 4:
            raise FormatError(f"{path}: implausible dimension count {ndim} at byte 3")
        raw = f.read(4 * ndim)
        if len(raw) < 4 * ndim:
            raise FormatError(f"{path}: truncated dimension list at byte {4 + len(raw)}")
        dims = struct.unpack(f">{ndim}I", raw)
        count = int(np.prod(dims))
        payload = f.read(count)
        if len(payload) < count:
            raise FormatError(
                f"{path}: payload has {len(payload)} bytes at byte {4 + 4 * ndim}, "
                f"expected {count}")
        return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


_IDX_FILES = {
    "train_images": ("train-images-idx3-ubyte", 2051),
    "train_labels": ("train-labels-idx1-ubyte", 2049),
    "test_images": ("t10k-images-idx3-ubyte", 2051),
    "test_labels": ("t10k-labels-idx1-ubyte", 2049),
}


def _find_idx(root: str, base: str) -> str:
    for cand in (base, base + ".gz"):
        p = os.path.join(root, cand)
        if os.path.exists(p):
            return p
    raise ConfigError(f"missing dataset file {base}[.gz] under {root}")


def load_idx_digits(root: str, val_fraction: float = 0.1,
                    seed: int = 0) -> Dataset:
    """Load the classic 28x28 handwritten-digit corpus from IDX files."""
    tx = read_idx(_find_idx(root, _IDX_FILES["train_images"][0]))
    ty = read_idx(_find_idx(root, _IDX_FILES["train_labels"][0]))
    ex = read_idx(_find_idx(root, _IDX_FILES["test_images"][0]))
    ey = read_idx(_find_idx(root, _IDX_FILES["test_labels"][0]))
    if tx.ndim != 3 or ex.ndim != 3:
        raise FormatError("image files must be rank-3 IDX")
    if tx.shape[0] != ty.shape[0] or ex.shape[0] != ey.shape[0]:
        raise FormatError("image/label counts disagree")
    train = normalize(tx)[:, None]
    test = normalize(ex)[:, None]
    a, b, c, d = split_train_val(train, ty.astype(np.int64), val_fraction, seed)
    return Dataset("idx-digits", a, b, c, d, test, ey.astype(np.int64), 10)


_CIFAR_RECORD = 3073  # 1 label byte + 3*32*32 pixels


def read_cifar_batch(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) == 0 or len(raw) % _CIFAR_RECORD != 0:
        raise FormatError(
            f"{path}: size {len(raw)} is not a multiple of {_CIFAR_RECORD} "
            f"(short by {_CIFAR_RECORD - len(raw) % _CIFAR_RECORD} bytes at "
            f"byte {len(raw)})")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
    labels = rec[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise FormatError(f"{path}: label {labels.max()} out of range at record "
                          f"{int(np.argmax(labels))}")
    images = rec[:, 1:].reshape(-1, 3, 32, 32)
    return images, labels


def load_cifar10(root: str, val_fraction: float = 0.1, seed: int = 0) -> Dataset:
    xs, ys = [], []
    for i in range(1, 6):
        p = os.path.join(root, f"data_batch_{i}.bin")
        if not os.path.exists(p):
            raise ConfigError(f"missing dataset file data_batch_{i}.bin under {root}")
        x, y = read_cifar_batch(p)
        xs.append(x)
        ys.append(y)
    tp = os.path.join(root, "test_batch.bin")
    if not os.path.exists(tp):
        raise ConfigError(f"missing dataset file test_batch.bin under {root}")
    ex, ey = read_cifar_batch(tp)
    train = normalize(np.concatenate(xs))
    a, b, c, d = split_train_val(train, np.concatenate(ys), val_fraction, seed)
    return Dataset("cifar10", a, b, c, d, normalize(ex), ey, 10)


# --- synthetic shapes ---------------------------------------------------

# Ordered so small n_classes picks maximally distinct glyphs first.
SHAPE_KINDS = ("square", "cross", "plus", "ring")


def _draw_shape(canvas: np.ndarray, kind: str, cy: int, cx: int, half: int,
                value: float) -> None:
    h, w = canvas.shape
    y0, y1 = max(0, cy - half), min(h, cy + half + 1)
    x0, x1 = max(0, cx - half), min(w, cx + half + 1)
    if kind == "square":
        canvas[y0:y1, x0:x1] = value
    elif kind == "ring":
        canvas[y0:y1, x0:x1] = value
        if y1 - y0 > 2 and x1 - x0 > 2:
            canvas[y0 + 1:y1 - 1, x0 + 1:x1 - 1] = 0.0
    elif kind == "plus":
        canvas[cy, x0:x1] = value
        canvas[y0:y1, cx] = value
    elif kind == "cross":
        for d in range(-half, half + 1):
            y, x = cy + d, cx + d
            if 0 <= y < h and 0 <= x < w:
                canvas[y, x] = value
            y, x = cy + d, cx - d
            if 0 <= y < h and 0 <= x < w:
                canvas[y, x] = value
    else:
        raise ValueError(f"unknown shape kind {kind!r}")


def default_halves(size: int, jitter: int) -> tuple[int, int]:
    """Glyph half-extents that keep every jittered shape on the canvas."""
    max_half = max(2, size // 2 - jitter - 1)
    return max(2, max_half - 2), max_half


def synthetic_shapes(n: int, n_classes: int = 4, size: int = 16,
                     seed: int = 0, noise: float = 0.15, jitter: int = 2,
                     min_half: int | None = None, max_half: int | None = None,
                     stream_tag: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Generate a balanced labeled corpus of noisy geometric glyphs.

    Classes cycle through square / ring / plus / cross. Each sample gets
    a per-sample Philox stream, so the corpus for a given seed is stable
    under changes of n (prefix property) and independent of batching.
    Returns (images in [0, 1] shaped (n, 1, size, size), labels).
    """
    if not 2 <= n_classes <= len(SHAPE_KINDS):
        raise ValueError(f"n_classes must lie in [2, {len(SHAPE_KINDS)}]")
    d_min, d_max = default_halves(size, jitter)
    if min_half is None:
        min_half = d_min
    if max_half is None:
        max_half = d_max
    if size < 2 * max_half + 1:
        raise ValueError(f"size {size} too small for max_half {max_half}")
    images = np.zeros((n, 1, size, size), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    center = size // 2
    for i in range(n):
        g = rng_for(seed, DATASET, stream_tag, i)
        cls = i % n_classes
        labels[i] = cls
        half = int(g.integers(min_half, max_half + 1))
        cy = center + int(g.integers(-jitter, jitter + 1))
        cx = center + int(g.integers(-jitter, jitter + 1))
        value = float(g.uniform(0.6, 1.0))
        canvas = np.zeros((size, size), dtype=np.float32)
        _draw_shape(canvas, SHAPE_KINDS[cls], cy, cx, half, value)
        if noise > 0:
            canvas += noise * g.standard_normal((size, size)).astype(np.float32)
        images[i, 0] = np.clip(canvas, 0.0, 1.0)
    return images, labels


def load_synthetic(n_train: int = 3000, n_test: int = 600, n_classes: int = 4,
                   size: int = 16, noise: float = 0.15, jitter: int = 2,
                   val_fraction: float = 0.1, seed: int = 0) -> Dataset:
    """Build a normalized synthetic Dataset; test samples use a separate
    stream tag so they never collide with training samples."""
    tx, ty = synthetic_shapes(n_train, n_classes, size, seed=seed,
                              noise=noise, jitter=jitter, stream_tag=0)
    ex, ey = synthetic_shapes(n_test, n_classes, size, seed=seed,
                              noise=noise, jitter=jitter, stream_tag=1)
    train = normalize(tx)
    a, b, c, d = split_train_val(train, ty, val_fraction, seed)
    return Dataset("synthetic", a, b, c, d, normalize(ex), ey, n_classes)


def load_dataset(spec: dict, data_root: str | None = None) -> Dataset:
    """Dispatch on spec["name"]; file-backed datasets resolve their
    directory from, in order: the SNNCOMPRESS_DATA env var, the
    data_root argument, spec["path"]."""
    spec = dict(spec)
    name = spec.pop("name", None)
    seed = int(spec.pop("seed", 0))
    val_fraction = float(spec.pop("val_fraction", 0.1))
    if name == "synthetic":
        known = {"n_train", "n_test", "n_classes", "size", "noise", "jitter"}
        unknown = set(spec) - known - {"path"}
        if unknown:
            raise ConfigError(f"unknown synthetic dataset options: {sorted(unknown)}")
        return load_synthetic(
            n_train=int(spec.get("n_train", 3000)),
            n_test=int(spec.get("n_test", 600)),
            n_classes=int(spec.get("n_classes", 4)),
            size=int(spec.get("size", 16)),
            noise=float(spec.get("noise", 0.15)),
            jitter=int(spec.get("jitter", 2)),
            val_fraction=val_fraction, seed=seed)
    if name in ("idx-digits", "mnist"):
        root = os.environ.get(DATA_ROOT_ENV) or data_root or spec.get("path")
        if not root:
            raise ConfigError(f"dataset {name} needs a path (or ${DATA_ROOT_ENV})")
        if not os.path.isdir(root):
            raise ConfigError(f"dataset path does not exist: {root}")
        return load_idx_digits(root, val_fraction, seed)
    if name == "cifar10":
        root = os.environ.get(DATA_ROOT_ENV) or data_root or spec.get("path")
        if not root:
            raise ConfigError(f"dataset cifar10 needs a path (or ${DATA_ROOT_ENV})")
        if not os.path.isdir(root):
            raise ConfigError(f"dataset path does not exist: {root}")
        return load_cifar10(root, val_fraction, seed)
    raise ConfigError(f"unknown dataset name {name!r}")
