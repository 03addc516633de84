"""Gradual timestep reduction while training.

Starting from a network converged at T_start, each iteration lowers the
simulation window by v timesteps, fine-tunes for e epochs at the new
latency, and measures validation accuracy. Iterations continue while
accuracy stays above the floor A_min; the result is the last checkpoint
that cleared the floor, together with the full latency curve. Training
state (optimizer moments, learning-rate schedule position) carries over
between iterations, and thresholds stay fixed at their T_start values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .analysis import asci
from .network import Network
from .simulate import run_batched
from .training.bptt import SnnTrainConfig, make_optimizer, train_snn

STATUS_OK = "ok"
STATUS_FLOOR_AT_START = "floor-not-met-at-start"


@dataclass(frozen=True)
class TemporalPruneConfig:
    """Schedule for latency reduction.

    v timesteps are removed per iteration and e epochs of fine-tuning
    follow each removal; a_min is the lowest acceptable validation
    accuracy (a fraction) and t_start the latency the input network was
    trained at.
    """

    t_start: int
    a_min: float
    v: int = 1
    e: int = 1

    def __post_init__(self):
        if self.v < 1:
            raise ValueError(f"v must be >= 1, got {self.v}")
        if self.e < 1:
            raise ValueError(f"e must be >= 1, got {self.e}")
        if not 0.0 < self.a_min < 1.0:
            raise ValueError(f"a_min must lie in (0, 1), got {self.a_min}")
        if self.t_start <= self.v:
            raise ValueError(
                f"t_start {self.t_start} must exceed the step size {self.v}")


@dataclass(frozen=True)
class LatencyCurve:
    """(T_r, validation accuracy, ASCI) per pruning iteration."""

    entries: tuple[tuple[int, float, float], ...]

    def __post_init__(self):
        ts = [t for t, _, _ in self.entries]
        if any(b >= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"latencies must strictly decrease, got {ts}")

    def latencies(self) -> list[int]:
        return [t for t, _, _ in self.entries]

    def to_csv(self) -> str:
        lines = ["T_r,val_acc,asci"]
        lines += [f"{t},{a},{s}" for t, a, s in self.entries]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TemporalPruneResult:
    """Outcome of a latency-reduction run.

    `network` is the last iterate whose validation accuracy cleared the
    floor (the untouched input when nothing did), `final_t` its
    operating latency, `start_acc`/`start_asci` the metrics measured at
    t_start before any reduction.
    """

    network: Network
    final_t: int
    curve: LatencyCurve
    status: str
    start_acc: float
    start_asci: float


def _val_metrics(net: Network, val_x: np.ndarray, val_y: np.ndarray,
                 timesteps: int, seed: int, batch_size: int
                 ) -> tuple[float, float]:
    potentials, record = run_batched(net, val_x, timesteps, seed=seed,
                                     batch_size=batch_size)
    acc = float(np.mean(np.argmax(potentials, axis=1) == val_y))
    return acc, asci(record)


def temporal_prune(net: Network, train_x: np.ndarray, train_y: np.ndarray,
                   val_x: np.ndarray, val_y: np.ndarray,
                   cfg: TemporalPruneConfig, train_cfg: SnnTrainConfig,
                   on_checkpoint=None) -> TemporalPruneResult:
    """Reduce latency in steps of v while accuracy stays above a_min.

    Each iteration trains e epochs at the reduced latency with the same
    optimizer and schedule position, then measures. The loop also stops
    when another reduction would hit zero timesteps.
    `on_checkpoint(iteration, t_r, net, acc, asci)` fires after every
    iteration for persistence.
    """
    step_cfg = dataclasses.replace(train_cfg, epochs=cfg.e)
    acc, start_asci = _val_metrics(net, val_x, val_y, cfg.t_start,
                                   train_cfg.seed, train_cfg.batch_size)
    start_acc = acc
    if acc <= cfg.a_min:
        return TemporalPruneResult(network=net, final_t=cfg.t_start,
                                   curve=LatencyCurve(entries=()),
                                   status=STATUS_FLOOR_AT_START,
                                   start_acc=start_acc, start_asci=start_asci)

    best, best_t = net.copy(), cfg.t_start
    optimizer = make_optimizer(net, step_cfg)
    entries: list[tuple[int, float, float]] = []
    t_r = cfg.t_start
    epoch_offset = 0
    iteration = 0
    while acc > cfg.a_min and t_r - cfg.v > 0:
        t_r -= cfg.v
        train_snn(net, train_x, train_y, val_x, val_y, t_r, step_cfg,
                  optimizer=optimizer, epoch_offset=epoch_offset)
        epoch_offset += cfg.e
        acc, a = _val_metrics(net, val_x, val_y, t_r,
                              train_cfg.seed, train_cfg.batch_size)
        entries.append((t_r, acc, a))
        if on_checkpoint is not None:
            on_checkpoint(iteration, t_r, net, acc, a)
        iteration += 1
        if acc > cfg.a_min:
            best, best_t = net.copy(), t_r
    return TemporalPruneResult(network=best, final_t=best_t,
                               curve=LatencyCurve(entries=tuple(entries)),
                               status=STATUS_OK,
                               start_acc=start_acc, start_asci=start_asci)
