"""Post-training weight sharing by per-layer 1-D k-means.

Each weighted layer's values are clustered into z = 2^bits groups with
Lloyd's algorithm (linearly spaced initialization over the weight range,
nearest-centroid assignment with ties to the lower index, centroid
update by cluster mean). Weights are then replaced by their centroid, so
a layer needs only log2(z) bits per connection plus the centroid table.
When a layer holds fewer distinct values than z, the codebook shrinks to
the distinct values and the mapping is lossless. No retraining follows
quantization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .network import Network

KMEANS_TOL = 1e-8
KMEANS_MAX_ITER = 300
# Exact dynamic-programming refinement is worth it only while the
# O(z * n^2) table stays small.
DP_MAX_POINTS = 1024
DP_MAX_WORK = 8e7


@dataclass(frozen=True)
class Codebook:
    """Shared weights for one layer: a centroid table and, per stored
    connection, the index of its centroid."""

    layer_index: int
    centroids: np.ndarray
    assignments: np.ndarray

    def __post_init__(self):
        if self.centroids.ndim != 1 or self.centroids.size < 1:
            raise ValueError("centroid table must be a non-empty vector")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids must be finite")
        a = self.assignments
        if a.ndim != 1 or a.size < 1:
            raise ValueError("assignments must be a non-empty flat vector")
        if a.min() < 0 or a.max() >= self.centroids.size:
            raise ValueError("assignment index outside the centroid table")

    @property
    def n_clusters(self) -> int:
        return int(self.centroids.size)

    def values(self) -> np.ndarray:
        """The quantized flat weight vector."""
        return self.centroids[self.assignments]


def _lloyd(w: np.ndarray, z: int, wcss_trace: list | None) -> np.ndarray:
    """Plain Lloyd iterations from linearly spaced initial centroids."""
    centroids = np.linspace(float(w.min()), float(w.max()), z)
    for _ in range(KMEANS_MAX_ITER):
        assignments = np.argmin(np.abs(w[:, None] - centroids[None, :]), axis=1)
        if wcss_trace is not None:
            wcss_trace.append(float(((w - centroids[assignments]) ** 2).sum()))
        counts = np.bincount(assignments, minlength=z)
        sums = np.bincount(assignments, weights=w, minlength=z)
        moved = np.where(counts > 0, sums / np.maximum(counts, 1), centroids)
        shift = float(np.abs(moved - centroids).max())
        centroids = moved
        if shift < KMEANS_TOL:
            break
    return centroids


def _dp_centroids(w: np.ndarray, z: int) -> np.ndarray:
    """Optimal 1-D clustering of the sorted data by dynamic programming.

    d[k][j] is the best cost of splitting the first j points into k
    contiguous groups; group cost comes from prefix sums. O(z * n^2).
    """
    x = np.sort(w)
    n = x.size
    ps = np.concatenate([[0.0], np.cumsum(x)])
    ps2 = np.concatenate([[0.0], np.cumsum(x * x)])
    prev = np.full(n + 1, np.inf)
    prev[0] = 0.0
    arg_rows = []
    for k in range(1, z + 1):
        cur = np.full(n + 1, np.inf)
        arg = np.zeros(n + 1, dtype=np.int64)
        for j in range(k, n + 1):
            i = np.arange(k - 1, j)
            s = ps[j] - ps[i]
            cost = (ps2[j] - ps2[i]) - s * s / (j - i)
            total = prev[k - 1:j] + cost
            m = int(np.argmin(total))
            cur[j] = total[m]
            arg[j] = i[m]
        arg_rows.append(arg)
        prev = cur
    bounds = []
    j = n
    for k in range(z, 0, -1):
        i = int(arg_rows[k - 1][j])
        bounds.append((i, j))
        j = i
    bounds.reverse()
    return np.array([(ps[b] - ps[a]) / (b - a) for a, b in bounds])


def _wcss(w: np.ndarray, centroids: np.ndarray) -> float:
    a = np.argmin(np.abs(w[:, None] - centroids[None, :]), axis=1)
    return float(((w - centroids[a]) ** 2).sum())


def kmeans_cluster(weights: np.ndarray, z: int, seed: int = 0,
                   layer_index: int = 0,
                   wcss_trace: list | None = None) -> Codebook:
    """Cluster a flat weight array into at most z shared values.

    Lloyd iterations run from linearly spaced initial centroids until
    the largest centroid movement falls under 1e-8 or 300 rounds pass;
    on arrays small enough for the exact dynamic program, the optimal
    solution is computed as well and the better of the two is returned
    (linear-init Lloyd alone can stall far from the 1-D optimum). Fewer
    distinct values than z shrinks the table to the distinct values
    (lossless) with a warning. The seed is accepted for interface
    stability; the procedure is fully deterministic. `wcss_trace`, when
    given, receives the within-cluster sum of squares after each Lloyd
    assignment step.
    """
    del seed
    arr = np.asarray(weights).ravel()
    if arr.size == 0:
        raise ValueError("no weights to cluster")
    if not np.all(np.isfinite(arr)):
        raise ValueError("weights must be finite")
    if z < 1:
        raise ValueError(f"cluster count must be >= 1, got {z}")

    distinct = np.unique(arr)
    if distinct.size < z:
        warnings.warn(
            f"layer {layer_index}: only {distinct.size} distinct weights; "
            f"shrinking cluster count from {z}", UserWarning, stacklevel=2)
        z = int(distinct.size)
    if distinct.size == z:
        assignments = np.searchsorted(distinct, arr)
        if wcss_trace is not None:
            wcss_trace.append(0.0)
        return Codebook(layer_index=layer_index, centroids=distinct,
                        assignments=assignments)

    w = arr.astype(np.float64)
    centroids = _lloyd(w, z, wcss_trace)
    if w.size <= DP_MAX_POINTS and z * w.size * w.size <= DP_MAX_WORK:
        exact = _dp_centroids(w, z)
        if _wcss(w, exact) < _wcss(w, centroids):
            centroids = exact
    # Store centroids at the weights' own precision and settle the final
    # assignment against the stored values.
    centroids = centroids.astype(arr.dtype)
    assignments = np.argmin(np.abs(arr[:, None] - centroids[None, :]), axis=1)
    return Codebook(layer_index=layer_index, centroids=centroids,
                    assignments=assignments)


def compression_rate(p: int, b: int, z: int) -> float:
    """Storage ratio of p full-precision weights against z shared values
    plus per-weight indices: p*b / (p*log2(z) + z*b)."""
    if z == 0:
        raise ValueError("cluster count must be >= 1")
    if p < 1 or z < 1 or b < 1:
        raise ValueError(f"need p, z, b >= 1, got p={p}, z={z}, b={b}")
    return (p * b) / (p * math.log2(z) + z * b)


@dataclass(frozen=True)
class CompressionStats:
    """Eq.-style storage accounting for one layer."""

    layer_index: int
    p: int
    b: int
    z: int
    r: float

    def as_dict(self) -> dict:
        return {"layer_index": self.layer_index, "p": self.p, "b": self.b,
                "z": self.z, "r": self.r}


@dataclass(frozen=True)
class QuantizeResult:
    """Quantized network with per-layer codebooks and storage stats."""

    network: Network
    codebooks: tuple[Codebook, ...]
    stats: tuple[CompressionStats, ...]
    bits: int

    @property
    def overall_rate(self) -> float:
        """Whole-network storage ratio with per-layer codebook overhead."""
        num = sum(s.p * s.b for s in self.stats)
        den = sum(s.p * math.log2(s.z) + s.z * s.b for s in self.stats)
        return num / den


def quantize_network(net: Network, bits: int, seed: int = 0) -> QuantizeResult:
    """Cluster every weighted layer independently at z = 2^bits.

    Connection counts, bit widths and rates are reported per layer; the
    effective z shrinks to the distinct-value count where that is
    smaller (the bits=32 limit is therefore lossless).
    """
    if isinstance(bits, bool) or not isinstance(bits, (int, np.integer)):
        raise ValueError(f"bits must be an integer, got {bits!r}")
    if not 1 <= bits <= 32:
        raise ValueError(f"bits must lie in [1, 32], got {bits}")
    z = 2 ** int(bits)
    books: list[Codebook] = []
    stats: list[CompressionStats] = []
    new_weights: list[np.ndarray] = []
    for i in net.config.weighted_indices():
        w = net.weight_of(i)
        book = kmeans_cluster(w, z, seed=seed, layer_index=i)
        new_weights.append(book.values().reshape(w.shape))
        b = w.dtype.itemsize * 8
        stats.append(CompressionStats(
            layer_index=i, p=int(w.size), b=b, z=book.n_clusters,
            r=compression_rate(int(w.size), b, book.n_clusters)))
        books.append(book)
    return QuantizeResult(network=Network(net.config, new_weights),
                          codebooks=tuple(books), stats=tuple(stats),
                          bits=int(bits))
