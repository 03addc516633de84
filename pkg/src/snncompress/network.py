"""Network architecture description and weight containers.

A network is an ordered list of LayerSpecs over a fixed input shape. All
weighted layers except the last are spiking (their analog twin uses
ReLU); the last weighted layer is the output accumulator and must be the
final layer of the list. Thresholds, when set, map one-to-one onto the
spiking weighted layers in order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import layers as L
from .lif import DEFAULT_LEAK
from .rng import WEIGHT_INIT, rng_for


@dataclass(frozen=True)
class NetworkConfig:
    input_shape: tuple[int, int, int]
    n_classes: int
    layers: tuple[L.LayerSpec, ...]
    leak_lambda: float = DEFAULT_LEAK
    thresholds: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.thresholds is not None:
            object.__setattr__(self, "thresholds",
                               tuple(float(t) for t in self.thresholds))
        self.validate()

    def validate(self) -> None:
        if len(self.input_shape) != 3 or min(self.input_shape) <= 0:
            raise ValueError(f"input_shape must be (C, H, W), got {self.input_shape}")
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if not 0.0 < self.leak_lambda <= 1.0:
            raise ValueError(f"leak must lie in (0, 1], got {self.leak_lambda}")
        if not self.layers:
            raise ValueError("network has no layers")
        widx = self.weighted_indices()
        if not widx or widx[-1] != len(self.layers) - 1:
            raise ValueError("last layer must be the weighted output layer")
        if self.layers[-1].spiking:
            raise ValueError("output layer must be non-spiking")
        for i in widx[:-1]:
            if not self.layers[i].spiking:
                raise ValueError(f"hidden weighted layer {i} must be spiking")
        # Shape chain must be consistent end to end.
        shapes = self.layer_shapes()
        out = shapes[-1]
        if out != (self.n_classes,):
            raise ValueError(f"network output shape {out} != ({self.n_classes},)")
        if self.thresholds is not None:
            spk = self.spiking_indices()
            if len(self.thresholds) != len(spk):
                raise ValueError(
                    f"{len(self.thresholds)} thresholds for {len(spk)} spiking layers")
            if any(t <= 0 for t in self.thresholds):
                raise ValueError("thresholds must be positive")

    def weighted_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.layers) if s.has_weights]

    def spiking_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.layers) if s.has_weights and s.spiking]

    def layer_shapes(self) -> list[tuple[int, ...]]:
        """Per-layer output shapes for one sample, in layer order."""
        shapes = []
        cur: tuple[int, ...] = self.input_shape
        for s in self.layers:
            cur = L.out_shape(s, cur)
            shapes.append(cur)
        return shapes

    def n_params(self) -> int:
        return sum(s.n_params() for s in self.layers)

    def threshold_of(self, layer_idx: int) -> float:
        if self.thresholds is None:
            raise ValueError("thresholds are not set; convert or assign them first")
        return self.thresholds[self.spiking_indices().index(layer_idx)]

    def with_thresholds(self, thresholds) -> "NetworkConfig":
        return replace(self, thresholds=tuple(float(t) for t in thresholds))


def build_config(input_shape: tuple[int, int, int], n_classes: int,
                 layer_defs: list[dict], leak_lambda: float = DEFAULT_LEAK
                 ) -> NetworkConfig:
    """Resolve compact layer definitions into a full NetworkConfig.

    Each definition is a dict with `kind` plus, for conv: out_channels,
    kernel (default 3), stride (1), padding (1); avgpool: size (2);
    dropout: rate; linear: out_features (defaults to n_classes). Input
    channel / feature counts are inferred by shape propagation, and the
    final linear layer is the non-spiking output.
    """
    specs: list[L.LayerSpec] = []
    cur: tuple[int, ...] = tuple(input_shape)
    n_linear = sum(1 for d in layer_defs if d.get("kind") == L.LINEAR)
    linear_seen = 0
    for d in layer_defs:
        d = dict(d)
        kind = d.pop("kind", None)
        if kind == L.CONV:
            spec = L.conv_spec(c_in=cur[0], c_out=int(d.pop("out_channels")),
                               kernel=int(d.pop("kernel", 3)),
                               stride=int(d.pop("stride", 1)),
                               padding=int(d.pop("padding", 1)),
                               spiking=True)
        elif kind == L.LINEAR:
            linear_seen += 1
            is_last = linear_seen == n_linear
            n_in = 1
            for x in cur:
                n_in *= x
            n_out = int(d.pop("out_features", n_classes if is_last else 0))
            if n_out <= 0:
                raise ValueError("hidden linear layer needs out_features")
            spec = L.linear_spec(n_in, n_out, spiking=not is_last)
        elif kind == L.AVGPOOL:
            spec = L.avgpool_spec(int(d.pop("size", 2)))
        elif kind == L.DROPOUT:
            spec = L.dropout_spec(float(d.pop("rate")))
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        if d:
            raise ValueError(f"unknown {kind} layer options: {sorted(d)}")
        specs.append(spec)
        cur = L.out_shape(spec, cur)
    return NetworkConfig(tuple(input_shape), n_classes, tuple(specs),
                         leak_lambda=leak_lambda)


@dataclass
class Network:
    """Architecture plus one weight array per weighted layer, in order."""

    config: NetworkConfig
    weights: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        widx = self.config.weighted_indices()
        if len(self.weights) != len(widx):
            raise ValueError(
                f"{len(self.weights)} weight arrays for {len(widx)} weighted layers")
        for w, i in zip(self.weights, widx):
            expect = self.config.layers[i].weight_shape()
            if tuple(w.shape) != expect:
                raise ValueError(
                    f"layer {i} weight shape {w.shape} != expected {expect}")

    def weight_of(self, layer_idx: int) -> np.ndarray:
        return self.weights[self.config.weighted_indices().index(layer_idx)]

    def copy(self) -> "Network":
        return Network(self.config, [w.copy() for w in self.weights])

    def n_params(self) -> int:
        return int(sum(w.size for w in self.weights))

    @property
    def dtype(self):
        return self.weights[0].dtype


def init_weights(config: NetworkConfig, seed: int = 0,
                 dtype=np.float32) -> Network:
    """He-initialize a fresh network: std sqrt(2/fan_in) for spiking /
    ReLU layers, sqrt(1/fan_in) for the output layer. No biases exist
    anywhere."""
    ws = []
    for i in config.weighted_indices():
        spec = config.layers[i]
        gain = 2.0 if spec.spiking else 1.0
        std = float(np.sqrt(gain / spec.fan_in()))
        g = rng_for(seed, WEIGHT_INIT, i)
        ws.append((g.standard_normal(spec.weight_shape()) * std).astype(dtype))
    return Network(config, ws)
