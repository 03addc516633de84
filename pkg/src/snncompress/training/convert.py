"""Analog-to-spiking conversion by percentile threshold balancing.

Each hidden layer's firing threshold is set to a high percentile
(default 99.9) of its pre-activation distribution, collected over every
timestep of a calibration spike train. Layers are balanced in order:
layer k's pre-activations are computed from the spike trains produced by
layers 1..k-1 running with their already-frozen thresholds, so the
statistic each layer sees matches what it will see at inference.
Dropout is inactive during calibration. The output layer gets no
threshold (it never fires).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import layers as L
from ..encoding import poisson_encode
from ..lif import LIFConfig, NeuronState, lif_step
from ..network import Network

DEFAULT_PERCENTILE = 99.9


@dataclass(frozen=True)
class ThresholdSet:
    """Balanced thresholds, one per hidden spiking layer in depth order."""

    values: tuple[float, ...]
    percentile: float = DEFAULT_PERCENTILE

    def __post_init__(self):
        if not 0.0 < self.percentile <= 100.0:
            raise ValueError(f"percentile must lie in (0, 100], got {self.percentile}")
        if any(not np.isfinite(v) or v <= 0 for v in self.values):
            raise ValueError(f"thresholds must be positive and finite: {self.values}")


def balance_thresholds(net: Network, calib_images: np.ndarray,
                       timesteps: int, percentile: float = DEFAULT_PERCENTILE,
                       seed: int = 0) -> ThresholdSet:
    """Compute per-layer thresholds from a calibration image block.

    `net` carries analog-trained weights; existing thresholds on its
    config are ignored. Percentiles interpolate linearly between order
    statistics.
    """
    if not 0.0 < percentile <= 100.0:
        raise ValueError(f"percentile must lie in (0, 100], got {percentile}")
    if calib_images.shape[0] == 0:
        raise ValueError("calibration set is empty")
    cfg = net.config
    # Spike trains per timestep, shaped (T, N, ...); walk layer by layer.
    x_seq = poisson_encode(calib_images, timesteps, seed=seed, dtype=net.dtype)
    t, n = x_seq.shape[0], x_seq.shape[1]
    values: list[float] = []
    for i, spec in enumerate(cfg.layers):
        if spec.kind == L.AVGPOOL:
            flat = x_seq.reshape((t * n,) + x_seq.shape[2:])
            pooled = L.avgpool_forward(flat, spec.pool)
            x_seq = pooled.reshape((t, n) + pooled.shape[1:])
        elif spec.kind == L.DROPOUT:
            continue  # inference mode: identity
        elif spec.has_weights and spec.spiking:
            w = net.weight_of(i)
            flat = x_seq.reshape((t * n,) + x_seq.shape[2:])
            a = L.layer_apply(spec, w, flat)
            a_seq = a.reshape((t, n) + a.shape[1:])
            v_th = float(np.percentile(a_seq, percentile))
            if not np.isfinite(v_th) or v_th <= 0:
                raise ValueError(
                    f"layer {i} produced a non-positive threshold ({v_th}); "
                    "calibration activations are too weak")
            values.append(v_th)
            # Regenerate this layer's spike train under the frozen threshold.
            lif_cfg = LIFConfig(cfg.leak_lambda, v_th)
            state = NeuronState.zeros(a_seq.shape[1:], dtype=a_seq.dtype)
            out = np.empty_like(a_seq)
            for step in range(t):
                state, out[step] = lif_step(state, a_seq[step], lif_cfg)
            x_seq = out
        else:
            break  # output layer: nothing to balance past this point
    return ThresholdSet(tuple(values), percentile=percentile)


def convert_to_snn(net: Network, calib_images: np.ndarray, timesteps: int,
                   percentile: float = DEFAULT_PERCENTILE,
                   seed: int = 0) -> tuple[Network, ThresholdSet]:
    """Copy the analog network and attach balanced thresholds."""
    ts = balance_thresholds(net, calib_images, timesteps,
                            percentile=percentile, seed=seed)
    snn = Network(net.config.with_thresholds(ts.values),
                  [w.copy() for w in net.weights])
    return snn, ts
