"""Spiking inference over encoded spike trains.

The forward pass walks the layer list once per timestep: hidden weighted
layers integrate-and-fire (soft reset), pooling averages spikes into
fractional values, dropout is the identity at inference, and the output
layer accumulates its weighted input over all T steps without leak,
threshold, or reset. Class prediction is the argmax of the accumulated
output potential.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from .encoding import poisson_encode
from .lif import LIFConfig, NeuronState, lif_step
from .network import Network


@dataclass
class SpikeRecord:
    """Spike and membrane statistics from one batch of presentations.

    `spike_counts[k]` and `accum[k]` hold, for the k-th spiking layer
    (layer index `layer_indices[k]` in the config), the per-unit spike
    count and the per-unit sum of pre-reset potentials over all
    timesteps, shaped (N, *layer_out_shape). `input_counts` counts input
    events (|spikes|) per pixel, shaped like the image batch.
    """

    timesteps: int
    n_samples: int
    layer_indices: tuple[int, ...]
    spike_counts: list[np.ndarray]
    accum: list[np.ndarray]
    input_counts: np.ndarray

    @classmethod
    def concatenate(cls, records: list["SpikeRecord"]) -> "SpikeRecord":
        if not records:
            raise ValueError("no records to concatenate")
        first = records[0]
        for r in records[1:]:
            if r.timesteps != first.timesteps or r.layer_indices != first.layer_indices:
                raise ValueError("records disagree on timesteps or layers")
        return cls(
            timesteps=first.timesteps,
            n_samples=sum(r.n_samples for r in records),
            layer_indices=first.layer_indices,
            spike_counts=[np.concatenate([r.spike_counts[k] for r in records])
                          for k in range(len(first.layer_indices))],
            accum=[np.concatenate([r.accum[k] for r in records])
                   for k in range(len(first.layer_indices))],
            input_counts=np.concatenate([r.input_counts for r in records]),
        )


def forward_pass(net: Network, input_spikes: np.ndarray,
                 ) -> tuple[np.ndarray, SpikeRecord]:
    """Run a (T, N, C, H, W) spike tensor through the network.

    Returns the accumulated output potentials (N, n_classes) and the
    spike record. T = 0 yields zero potentials and an empty record.
    Thresholds must be set on the config.
    """
    cfg = net.config
    if input_spikes.ndim != 5:
        raise ValueError(f"expected (T, N, C, H, W) spikes, got {input_spikes.shape}")
    if tuple(input_spikes.shape[2:]) != cfg.input_shape:
        raise ValueError(
            f"spike frame shape {input_spikes.shape[2:]} != input {cfg.input_shape}")
    spiking = cfg.spiking_indices()
    if spiking and cfg.thresholds is None:
        raise ValueError("thresholds are not set; convert or assign them first")

    timesteps, n = input_spikes.shape[0], input_spikes.shape[1]
    dtype = input_spikes.dtype
    shapes = cfg.layer_shapes()
    states = {i: NeuronState.zeros((n,) + shapes[i], dtype=dtype) for i in spiking}
    lif_cfgs = {i: LIFConfig(cfg.leak_lambda, cfg.threshold_of(i)) for i in spiking}
    potentials = np.zeros((n, cfg.n_classes), dtype=dtype)
    input_counts = np.zeros((n,) + cfg.input_shape, dtype=dtype)

    for t in range(timesteps):
        x = input_spikes[t]
        input_counts += np.abs(x)
        for i, spec in enumerate(cfg.layers):
            if spec.has_weights:
                a = L.layer_apply(spec, net.weight_of(i), x)
                if spec.spiking:
                    states[i], x = lif_step(states[i], a, lif_cfgs[i])
                else:
                    potentials += a  # output accumulator: no leak, no reset
            else:
                x = L.layer_apply(spec, None, x)

    return potentials, SpikeRecord(
        timesteps=timesteps,
        n_samples=n,
        layer_indices=tuple(spiking),
        spike_counts=[states[i].spike_count for i in spiking],
        accum=[states[i].accum for i in spiking],
        input_counts=input_counts,
    )


def run_batched(net: Network, images: np.ndarray, timesteps: int,
                seed: int = 0, batch_size: int = 256,
                sample_ids: np.ndarray | None = None,
                ) -> tuple[np.ndarray, SpikeRecord]:
    """Encode and run a whole image set in batches; returns concatenated
    potentials and records. Sample ids default to dataset positions so
    results are independent of batch_size."""
    n = images.shape[0]
    if sample_ids is None:
        sample_ids = np.arange(n)
    pots, recs = [], []
    for lo in range(0, n, batch_size):
        hi = min(lo + batch_size, n)
        spikes = poisson_encode(images[lo:hi], timesteps, seed=seed,
                                sample_ids=sample_ids[lo:hi],
                                dtype=net.dtype)
        p, r = forward_pass(net, spikes)
        pots.append(p)
        recs.append(r)
    return np.concatenate(pots), SpikeRecord.concatenate(recs)


def evaluate(net: Network, images: np.ndarray, labels: np.ndarray,
             timesteps: int, seed: int = 0, batch_size: int = 256,
             sample_ids: np.ndarray | None = None) -> float:
    """Classification accuracy of the spiking network on encoded images."""
    potentials, _ = run_batched(net, images, timesteps, seed=seed,
                                batch_size=batch_size, sample_ids=sample_ids)
    return float(np.mean(np.argmax(potentials, axis=1) == labels))
