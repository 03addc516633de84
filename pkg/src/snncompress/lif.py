"""Leaky integrate-and-fire dynamics with soft reset.

One step of a hidden spiking unit:

    p = u + a                      accumulate weighted input
    if p > v_th:  spike, u' = p - v_th     (soft reset, no leak this step)
    else:         u' = lambda * p          (leak only when silent)

The comparison is strict, so p == v_th does not fire. Output-layer units
accumulate without leak, threshold, or reset; that path lives in the
simulator, not here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LEAK = 0.9901


@dataclass(frozen=True)
class LIFConfig:
    """Leak factor and firing threshold for one layer."""

    leak_lambda: float = DEFAULT_LEAK
    v_th: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.leak_lambda <= 1.0:
            raise ValueError(f"leak must lie in (0, 1], got {self.leak_lambda}")
        if not self.v_th > 0.0:
            raise ValueError(f"threshold must be positive, got {self.v_th}")


@dataclass
class NeuronState:
    """Per-unit membrane potential plus bookkeeping accumulators.

    `accum` sums the pre-reset potential p at every step (the quantity
    averaged for activation statistics); `spike_count` counts emitted
    spikes. Both share the membrane array's shape.
    """

    u: np.ndarray
    accum: np.ndarray = field(default=None)  # type: ignore[assignment]
    spike_count: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.accum is None:
            self.accum = np.zeros_like(self.u)
        if self.spike_count is None:
            self.spike_count = np.zeros_like(self.u)

    @classmethod
    def zeros(cls, shape: tuple[int, ...], dtype=np.float32) -> "NeuronState":
        return cls(u=np.zeros(shape, dtype=dtype))


def lif_step(state: NeuronState, weighted_input: np.ndarray,
             cfg: LIFConfig) -> tuple[NeuronState, np.ndarray]:
    """Advance every unit one timestep; returns (new state, spikes).

    Spikes are 0/1 in the membrane dtype. The input state is not mutated.
    """
    if weighted_input.shape != state.u.shape:
        raise ValueError(
            f"input shape {weighted_input.shape} != state shape {state.u.shape}")
    p = state.u + weighted_input
    spikes = (p > cfg.v_th).astype(p.dtype)
    u_next = np.where(spikes > 0, p - cfg.v_th, cfg.leak_lambda * p)
    return NeuronState(u=u_next.astype(p.dtype, copy=False),
                       accum=state.accum + p,
                       spike_count=state.spike_count + spikes), spikes
