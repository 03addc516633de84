"""Spike, operation and energy accounting, plus input-noise robustness.

Spike rate is a layer's total spike count over all timesteps, averaged
over images, per neuron. ASCI is the average cumulative spike count for
one inference, summed across layers. Synaptic operation counts scale the
analog network's multiply-accumulate counts by each layer's measured
spike rate, and the energy ratio compares the unpruned analog network's
MAC energy against the compressed spiking network's accumulate energy
at 45 nm estimates (4.6 pJ per MAC, 0.9 pJ per add). Memory traffic is
not modeled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import layers as L
from .encoding import add_gaussian_noise, poisson_encode
from .network import Network, NetworkConfig
from .simulate import SpikeRecord, forward_pass

E_MAC_PJ = 4.6
E_ADD_PJ = 0.9


def spike_rate(record: SpikeRecord, layer_idx: int) -> float:
    """Average spikes per neuron per inference for one spiking layer."""
    if layer_idx not in record.layer_indices:
        raise ValueError(f"layer {layer_idx} is not a recorded spiking layer")
    counts = record.spike_counts[record.layer_indices.index(layer_idx)]
    neurons = int(np.prod(counts.shape[1:]))
    if neurons == 0:
        raise ValueError(f"layer {layer_idx} has no neurons")
    per_image = counts.reshape(counts.shape[0], -1).sum(axis=1)
    return float(per_image.mean() / neurons)


def input_spike_rate(record: SpikeRecord) -> float:
    """Average input events per pixel per inference."""
    counts = record.input_counts
    neurons = int(np.prod(counts.shape[1:]))
    per_image = counts.reshape(counts.shape[0], -1).sum(axis=1)
    return float(per_image.mean() / neurons)


def asci(record: SpikeRecord, include_input: bool = True) -> float:
    """Average cumulative spike count per inference, summed over layers.

    The input spike train counts as a layer by default; pass
    include_input=False for the hidden-only figure.
    """
    total = 0.0
    for counts in record.spike_counts:
        total += float(counts.reshape(counts.shape[0], -1).sum(axis=1).mean())
    if include_input:
        c = record.input_counts
        total += float(c.reshape(c.shape[0], -1).sum(axis=1).mean())
    return total


@dataclass(frozen=True)
class SpikeStats:
    """Per-layer spike rates and the cumulative per-inference count."""

    timesteps: int
    rates: tuple[tuple[int, float], ...]  # (layer index, rate)
    input_rate: float
    asci: float
    asci_hidden: float

    def __post_init__(self):
        for idx, r in self.rates:
            if not 0.0 <= r <= self.timesteps + 1e-9:
                raise ValueError(f"layer {idx} rate {r} outside [0, T]")
        if not 0.0 <= self.input_rate <= self.timesteps + 1e-9:
            raise ValueError(f"input rate {self.input_rate} outside [0, T]")

    def as_dict(self) -> dict:
        return {
            "timesteps": self.timesteps,
            "rates": {str(i): r for i, r in self.rates},
            "input_rate": self.input_rate,
            "asci": self.asci,
            "asci_hidden": self.asci_hidden,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def spike_stats(record: SpikeRecord) -> SpikeStats:
    return SpikeStats(
        timesteps=record.timesteps,
        rates=tuple((i, spike_rate(record, i)) for i in record.layer_indices),
        input_rate=input_spike_rate(record),
        asci=asci(record, include_input=True),
        asci_hidden=asci(record, include_input=False),
    )


def ann_ops(spec: L.LayerSpec, out_h: int | None = None,
            out_w: int | None = None) -> int:
    """Multiply-accumulate count of one analog layer evaluation.

    Conv layers need their output spatial size; pooling and dropout
    cost nothing under this model.
    """
    if spec.kind == L.CONV:
        if out_h is None or out_w is None:
            raise ValueError("conv op count needs the output spatial size")
        if out_h <= 0 or out_w <= 0:
            raise ValueError(f"output size {out_h}x{out_w} must be positive")
        return spec.k_w * spec.k_h * spec.c_in * out_h * out_w * spec.c_out
    if spec.kind == L.LINEAR:
        return spec.n_in * spec.n_out
    return 0


def snn_ops(spec: L.LayerSpec, rate: float, out_h: int | None = None,
            out_w: int | None = None) -> float:
    """Synaptic operation count: the layer's analog MACs scaled by its
    measured spike rate."""
    if rate < 0:
        raise ValueError(f"spike rate must be non-negative, got {rate}")
    return rate * ann_ops(spec, out_h, out_w)


def network_ann_ops(config: NetworkConfig) -> dict[int, int]:
    """Analog op count per weighted layer, keyed by layer index."""
    shapes = config.layer_shapes()
    out = {}
    for i in config.weighted_indices():
        spec = config.layers[i]
        if spec.kind == L.CONV:
            out[i] = ann_ops(spec, shapes[i][1], shapes[i][2])
        else:
            out[i] = ann_ops(spec)
    return out


@dataclass(frozen=True)
class EnergyReport:
    """Operation counts and the MAC-versus-add energy ratio.

    `ann_layer_ops` counts the unpruned analog reference, keyed by its
    layer indices; `snn_layer_ops` counts the compressed spiking network
    at measured rates. Non-spiking layers never fire, so they contribute
    zero synaptic operations.
    """

    ann_layer_ops: tuple[tuple[int, int], ...]
    snn_layer_ops: tuple[tuple[int, float], ...]
    e_mac_pj: float
    e_add_pj: float
    alpha: float

    @property
    def ann_total(self) -> int:
        return sum(v for _, v in self.ann_layer_ops)

    @property
    def snn_total(self) -> float:
        return sum(v for _, v in self.snn_layer_ops)

    def as_dict(self) -> dict:
        return {
            "ann_layer_ops": {str(i): v for i, v in self.ann_layer_ops},
            "snn_layer_ops": {str(i): v for i, v in self.snn_layer_ops},
            "ann_total_ops": self.ann_total,
            "snn_total_ops": self.snn_total,
            "e_mac_pj": self.e_mac_pj,
            "e_add_pj": self.e_add_pj,
            "alpha": self.alpha,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def alpha_from_totals(ann_total_ops: float, snn_total_ops: float) -> float:
    """Energy ratio of total analog MACs against total synaptic ops.

    Written as an op ratio times the per-op energy ratio so the
    identical-count case lands on exactly E_MAC / E_ADD."""
    if snn_total_ops == 0:
        raise ZeroDivisionError("spiking network performed no synaptic operations")
    return (ann_total_ops / snn_total_ops) * (E_MAC_PJ / E_ADD_PJ)


def energy_report(ann_config: NetworkConfig, snn_config: NetworkConfig,
                  record: SpikeRecord) -> EnergyReport:
    """Compare the unpruned analog network's MAC energy against the
    compressed spiking network's synaptic-op energy.

    Raises ZeroDivisionError when the spiking network produced no
    synaptic operations at all (nothing fired).
    """
    ann_layer = tuple(sorted(network_ann_ops(ann_config).items()))
    snn_arch = network_ann_ops(snn_config)
    snn_layer = []
    for i in snn_config.weighted_indices():
        rate = spike_rate(record, i) if i in record.layer_indices else 0.0
        snn_layer.append((i, rate * snn_arch[i]))
    snn_total = sum(v for _, v in snn_layer)
    ann_total = sum(v for _, v in ann_layer)
    if snn_total == 0.0:
        raise ZeroDivisionError("spiking network performed no synaptic operations")
    return EnergyReport(ann_layer_ops=ann_layer, snn_layer_ops=tuple(snn_layer),
                        e_mac_pj=E_MAC_PJ, e_add_pj=E_ADD_PJ,
                        alpha=alpha_from_totals(ann_total, snn_total))


def energy_ratio(ann_config: NetworkConfig, snn_config: NetworkConfig,
                 record: SpikeRecord) -> float:
    return energy_report(ann_config, snn_config, record).alpha


@dataclass(frozen=True)
class NoiseCurve:
    """Accuracy under increasing input noise, one row per sigma."""

    entries: tuple[tuple[float, float], ...]  # (sigma, accuracy)

    def __post_init__(self):
        if not any(s == 0.0 for s, _ in self.entries):
            raise ValueError("noise curve must include sigma = 0")
        if any(s < 0 for s, _ in self.entries):
            raise ValueError("sigma must be non-negative")

    def accuracy_at(self, sigma: float) -> float:
        for s, a in self.entries:
            if s == sigma:
                return a
        raise KeyError(f"no entry for sigma {sigma}")

    def to_csv(self) -> str:
        lines = ["sigma,accuracy"]
        lines += [f"{s},{a}" for s, a in self.entries]
        return "\n".join(lines) + "\n"


def noise_robustness(net: Network, images: np.ndarray, labels: np.ndarray,
                     sigmas: list[float], timesteps: int, seed: int = 0,
                     batch_size: int = 256) -> NoiseCurve:
    """Accuracy after corrupting normalized pixels with Gaussian noise.

    Noise is added before spike encoding and clamped to [-1, 1]; the
    encode seed is shared across sigmas so the sigma = 0 row reproduces
    the clean accuracy exactly. The sigma list must contain 0.
    """
    if not any(s == 0 for s in sigmas):
        raise ValueError("sigma grid must include 0 (the clean baseline)")
    if any(s < 0 for s in sigmas):
        raise ValueError("sigmas must be non-negative")
    n = images.shape[0]
    sample_ids = np.arange(n)
    entries = []
    for j, sigma in enumerate(sigmas):
        noisy = add_gaussian_noise(images, float(sigma), seed=seed,
                                   sample_ids=sample_ids, stream_tag=j)
        correct = 0
        for lo in range(0, n, batch_size):
            hi = min(lo + batch_size, n)
            spikes = poisson_encode(noisy[lo:hi], timesteps, seed=seed,
                                    sample_ids=sample_ids[lo:hi],
                                    dtype=net.dtype)
            potentials, _ = forward_pass(net, spikes)
            correct += int(np.sum(np.argmax(potentials, axis=1) == labels[lo:hi]))
        entries.append((float(sigma), correct / n))
    return NoiseCurve(entries=tuple(entries))
