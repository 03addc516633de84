"""Structured width pruning driven by activation covariance.

The idea: run the spiking network over a calibration set, average each
conv neuron's accumulated membrane potential over time, and regroup the
values so every spatial location contributes one row of filter
responses. Principal component analysis of that matrix tells how many
uncorrelated filter directions the layer actually uses; the layer is
rebuilt at that width. Layers whose significant dimension count drops
below the preceding retained layer's are removed outright, and the
classifier head is collapsed to a single linear layer. The pruned
architecture is returned fresh (no weight transfer) for retraining.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import layers as L
from .errors import DegenerateInputError
from .network import Network, NetworkConfig, build_config
from .simulate import run_batched

VARIANCE_THRESHOLD = 0.999
EIGENVALUE_CLIP = 1e-12


def collect_activations(net: Network, images: np.ndarray, timesteps: int,
                        seed: int = 0, max_samples: int = 256,
                        batch_size: int = 256) -> dict[int, np.ndarray]:
    """Build one activation matrix per conv layer from live inference.

    Uses the first `max_samples` images in one batched sweep. For each
    conv layer the result has one row per (sample, y, x) location and
    one column per filter, holding accumulated potential / T. Keys are
    layer indices in the config.
    """
    if timesteps <= 0:
        raise ValueError(f"timesteps must be positive, got {timesteps}")
    if images.shape[0] == 0:
        raise ValueError("no calibration images")
    _, record = run_batched(net, images[:max_samples], timesteps,
                            seed=seed, batch_size=batch_size)
    out: dict[int, np.ndarray] = {}
    for k, idx in enumerate(record.layer_indices):
        if net.config.layers[idx].kind != L.CONV:
            continue
        avg = record.accum[k].astype(np.float64) / timesteps  # (N, M, H, W)
        m = avg.shape[1]
        out[idx] = np.ascontiguousarray(np.moveaxis(avg, 1, -1).reshape(-1, m))
    return out


def significant_dims(c_matrix: np.ndarray, threshold: float = VARIANCE_THRESHOLD,
                     center: bool = True) -> int:
    """Number of principal directions explaining `threshold` of variance.

    Columns are mean-centered first (disable with center=False to study
    the raw second-moment variant). Works on the M x M Gram matrix via
    symmetric eigendecomposition; eigenvalues below 1e-12 of the trace
    count as zero. Returns the smallest k whose top-k eigenvalues reach
    the threshold fraction of the total.
    """
    c = np.asarray(c_matrix, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {c.shape}")
    s, m = c.shape
    if s < m:
        raise ValueError(f"need at least as many rows as columns, got {s}x{m}")
    if not np.all(np.isfinite(c)):
        raise ValueError("activation matrix has non-finite entries")
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")

    x = c - c.mean(axis=0) if center else c
    scale = float(np.abs(c).max())
    if scale == 0.0 or float(np.abs(x).max()) <= 1e-12 * scale:
        raise DegenerateInputError("activation matrix carries no variance")

    evals = np.linalg.eigh(x.T @ x)[0][::-1].copy()  # descending
    np.maximum(evals, 0.0, out=evals)
    evals[evals < EIGENVALUE_CLIP * evals.sum()] = 0.0
    cum = np.cumsum(evals)
    total = cum[-1]
    if total <= 0.0:
        raise DegenerateInputError("activation matrix carries no variance")
    k = int(np.searchsorted(cum / total, threshold, side="left")) + 1
    return min(k, m)


def depth_reduce(dims: list[int]) -> list[int]:
    """Positions of layers kept by the depth reduction rule.

    A layer is dropped when its significant dimension count is strictly
    below that of the nearest earlier layer still retained. The first
    layer is always kept.
    """
    dims = [int(d) for d in dims]
    if not dims:
        raise ValueError("no dimension counts given")
    if any(d < 1 for d in dims):
        raise ValueError(f"dimension counts must be >= 1, got {dims}")
    retained = [0]
    for i in range(1, len(dims)):
        if dims[i] >= dims[retained[-1]]:
            retained.append(i)
    return retained


def build_pruned_config(parent: NetworkConfig, sig_dims: dict[int, int],
                        retained: list[int]) -> NetworkConfig:
    """Rebuild the architecture at pruned widths.

    `sig_dims` maps conv layer index to its new width; `retained` lists
    the conv layer indices that survive depth reduction. Dropped conv
    layers disappear and the next conv rewires to the previous width.
    Pooling and dropout layers before the classifier are kept as-is;
    every linear layer is replaced by a single output linear mapping the
    flattened feature volume to the class count.
    """
    retained_set = set(retained)
    unknown = retained_set - set(sig_dims)
    if unknown:
        raise ValueError(f"retained layers {sorted(unknown)} have no dimension count")
    defs: list[dict] = []
    for i, spec in enumerate(parent.layers):
        if spec.kind == L.CONV:
            if i not in retained_set:
                continue
            width = int(sig_dims[i])
            if width < 1:
                raise ValueError(f"layer {i} would be pruned to zero width")
            defs.append({"kind": L.CONV, "out_channels": width,
                         "kernel": spec.k_h, "stride": spec.stride,
                         "padding": spec.padding})
        elif spec.kind == L.AVGPOOL:
            defs.append({"kind": L.AVGPOOL, "size": spec.pool})
        elif spec.kind == L.DROPOUT:
            defs.append({"kind": L.DROPOUT, "rate": spec.rate})
        else:
            break  # first linear: the whole head collapses below
    defs.append({"kind": L.LINEAR})
    return build_config(parent.input_shape, parent.n_classes, defs,
                        leak_lambda=parent.leak_lambda)


@dataclass(frozen=True)
class PruneReport:
    """What the pruning pass did, layer by layer.

    `rows` holds (layer index, initial width, significant width, final
    width) per conv layer; final width is 0 for removed layers.
    `collapsed_linears` counts parent linear layers replaced by the
    single `head` (n_in, n_out) output layer.
    """

    rows: tuple[tuple[int, int, int, int], ...]
    removed_layers: tuple[int, ...]
    parent_params: int
    pruned_params: int
    collapsed_linears: int
    head: tuple[int, int]

    def __post_init__(self):
        if not 0.0 < self.param_ratio <= 1.0:
            raise ValueError(f"parameter ratio {self.param_ratio} outside (0, 1]")
        for idx, initial, sig, final in self.rows:
            if not 1 <= sig <= initial:
                raise ValueError(f"layer {idx}: significant width {sig} "
                                 f"outside [1, {initial}]")
            if final not in (0, sig):
                raise ValueError(f"layer {idx}: final width {final} is neither "
                                 f"0 nor the significant width {sig}")

    @property
    def param_ratio(self) -> float:
        return self.pruned_params / self.parent_params

    def as_dict(self) -> dict:
        return {
            "layers": [{"layer_index": i, "initial": a, "significant": s,
                        "final": f} for i, a, s, f in self.rows],
            "removed_layers": list(self.removed_layers),
            "parent_params": self.parent_params,
            "pruned_params": self.pruned_params,
            "param_ratio": self.param_ratio,
            "collapsed_linears": self.collapsed_linears,
            "head": {"n_in": self.head[0], "n_out": self.head[1]},
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def prune_spatial(net: Network, images: np.ndarray, timesteps: int,
                  seed: int = 0, threshold: float = VARIANCE_THRESHOLD,
                  center: bool = True, max_samples: int = 256,
                  batch_size: int = 256) -> tuple[NetworkConfig, PruneReport]:
    """Full single-shot pruning pass: collect, analyze, rebuild.

    Returns the pruned architecture (thresholds unset, weights not
    initialized) and a report. The caller retrains from scratch.
    """
    matrices = collect_activations(net, images, timesteps, seed=seed,
                                   max_samples=max_samples,
                                   batch_size=batch_size)
    conv_idx = sorted(matrices)
    dims = [significant_dims(matrices[i], threshold=threshold, center=center)
            for i in conv_idx]
    positions = depth_reduce(dims)
    retained = [conv_idx[p] for p in positions]
    sig = dict(zip(conv_idx, dims))
    pruned = build_pruned_config(net.config, sig, retained)

    rows = tuple((i, net.config.layers[i].c_out, sig[i],
                  sig[i] if i in set(retained) else 0) for i in conv_idx)
    removed = tuple(i for i in conv_idx if i not in set(retained))
    head_spec = pruned.layers[-1]
    report = PruneReport(
        rows=rows,
        removed_layers=removed,
        parent_params=net.config.n_params(),
        pruned_params=pruned.n_params(),
        collapsed_linears=sum(1 for s in net.config.layers if s.kind == L.LINEAR),
        head=(head_spec.n_in, head_spec.n_out),
    )
    return pruned, report
