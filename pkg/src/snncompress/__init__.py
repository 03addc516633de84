"""Spiking-network training and compression in numpy.

The package covers the full low-latency SNN pipeline: rate-coded LIF
simulation, hybrid analog-to-spiking training with surrogate-gradient
fine-tuning, activation-PCA channel and depth pruning, gradual timestep
pruning, k-means weight sharing, and spike/energy accounting.
"""

from .analysis import (EnergyReport, NoiseCurve, SpikeStats, asci,
                       energy_report, energy_ratio, noise_robustness,
                       spike_rate, spike_stats)
from .encoding import add_gaussian_noise, poisson_encode
from .lif import DEFAULT_LEAK, LIFConfig, NeuronState, lif_step
from .network import Network, NetworkConfig, build_config, init_weights
from .quantize import (Codebook, CompressionStats, QuantizeResult,
                       compression_rate, kmeans_cluster, quantize_network)
from .simulate import SpikeRecord, evaluate, forward_pass, run_batched
from .spatial import (PruneReport, build_pruned_config, collect_activations,
                      depth_reduce, prune_spatial, significant_dims)
from .temporal import (LatencyCurve, TemporalPruneConfig, TemporalPruneResult,
                       temporal_prune)

__version__ = "0.1.0"

__all__ = [
    "add_gaussian_noise", "poisson_encode",
    "DEFAULT_LEAK", "LIFConfig", "NeuronState", "lif_step",
    "Network", "NetworkConfig", "build_config", "init_weights",
    "SpikeRecord", "evaluate", "forward_pass", "run_batched",
    "PruneReport", "build_pruned_config", "collect_activations",
    "depth_reduce", "prune_spatial", "significant_dims",
    "LatencyCurve", "TemporalPruneConfig", "TemporalPruneResult",
    "temporal_prune",
    "Codebook", "CompressionStats", "QuantizeResult",
    "compression_rate", "kmeans_cluster", "quantize_network",
    "EnergyReport", "NoiseCurve", "SpikeStats", "asci",
    "energy_report", "energy_ratio", "noise_robustness",
    "spike_rate", "spike_stats",
    "__version__",
]
