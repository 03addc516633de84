"""Surrogate-gradient backpropagation through time.

The spike nonlinearity has zero derivative almost everywhere, so the
backward pass substitutes a triangular window around the threshold:

    d spike / d p  ~=  gamma * max(0, 1 - |p - v_th| / v_th)

peaking at gamma on p = v_th and vanishing outside (0, 2*v_th). The
membrane update is differentiated through its exact algebraic form

    u_t = s_t * (p_t - v_th) + (1 - s_t) * lambda * p_t,
    p_t = u_{t-1} + a_t,

including the reset path, with the same surrogate standing in for
d s / d p. Gradients flow across all timesteps (truncation-free) and
across layers through pooling and the fixed per-sample dropout masks.
Thresholds and leak are not trained; only weights receive gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import layers as L
from ..encoding import poisson_encode
from ..errors import TrainingError
from ..network import Network
from ..rng import DROPOUT, SHUFFLE, rng_for
from ..simulate import evaluate
from .ann import make_dropout_masks, softmax_cross_entropy
from .optim import Adam

DEFAULT_GAMMA = 0.3


def surrogate_grad(u: np.ndarray, v_th: float,
                   gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """Triangular surrogate derivative of the spike w.r.t. the membrane."""
    if v_th <= 0:
        raise ValueError("threshold must be positive")
    if gamma <= 0:
        raise ValueError("surrogate peak must be positive")
    return gamma * np.maximum(0.0, 1.0 - np.abs(u - v_th) / v_th)


@dataclass
class SnnTrainConfig:
    epochs: int
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 5e-4
    lr_halve_every: int = 5
    gamma: float = DEFAULT_GAMMA
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size <= 0:
            raise ValueError("batch size must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.lr_halve_every <= 0:
            raise ValueError("lr_halve_every must be positive")
        if self.gamma <= 0:
            raise ValueError("surrogate peak must be positive")


class _Block:
    """One weighted layer plus the pool/dropout chain feeding it."""

    __slots__ = ("layer_idx", "spec", "pre", "v_th")

    def __init__(self, layer_idx: int, spec: L.LayerSpec,
                 pre: list[tuple[int, L.LayerSpec]], v_th: float | None):
        self.layer_idx = layer_idx
        self.spec = spec
        self.pre = pre
        self.v_th = v_th


def _blocks(net: Network) -> list[_Block]:
    cfg = net.config
    blocks: list[_Block] = []
    pre: list[tuple[int, L.LayerSpec]] = []
    for i, spec in enumerate(cfg.layers):
        if spec.has_weights:
            v_th = cfg.threshold_of(i) if spec.spiking else None
            blocks.append(_Block(i, spec, pre, v_th))
            pre = []
        else:
            pre.append((i, spec))
    if pre:
        raise ValueError("layers after the output layer are not supported")
    return blocks


def snn_forward(net: Network, input_spikes: np.ndarray,
                masks: dict[int, np.ndarray] | None = None
                ) -> tuple[np.ndarray, list[dict]]:
    """Training-mode forward pass over a (T, N, ...) spike train.

    Returns accumulated output potentials and per-block caches holding
    the param-layer inputs and pre-threshold membranes for every step.
    With masks=None, dropout is the identity and the potentials match
    the inference path bit for bit.
    """
    cfg = net.config
    blocks = _blocks(net)
    timesteps, n = input_spikes.shape[0], input_spikes.shape[1]
    dtype = input_spikes.dtype
    leak = dtype.type(cfg.leak_lambda)

    caches = []
    for _ in blocks:
        caches.append({"x": [None] * timesteps, "p": [None] * timesteps,
                       "prechain": None})
    potentials = np.zeros((n, cfg.n_classes), dtype=dtype)
    u = {b: None for b in range(len(blocks))}  # lazily shaped membranes

    for t in range(timesteps):
        x = input_spikes[t]
        for b, blk in enumerate(blocks):
            if t == 0:
                chain = []
                for i, spec in blk.pre:
                    if spec.kind == L.AVGPOOL:
                        chain.append(("pool", x.shape, spec.pool))
                        x = L.avgpool_forward(x, spec.pool)
                    else:
                        m = masks.get(i) if masks else None
                        chain.append(("drop", m))
                        if m is not None:
                            x = x * m
                caches[b]["prechain"] = chain
            else:
                for step in caches[b]["prechain"]:
                    if step[0] == "pool":
                        x = L.avgpool_forward(x, step[2])
                    elif step[1] is not None:
                        x = x * step[1]
            caches[b]["x"][t] = x
            a = L.layer_apply(blk.spec, net.weight_of(blk.layer_idx), x)
            if blk.spec.spiking:
                p = a if u[b] is None else u[b] + a
                s = (p > blk.v_th).astype(dtype)
                u[b] = s * (p - dtype.type(blk.v_th)) + (1.0 - s) * (leak * p)
                caches[b]["p"][t] = p
                x = s
            else:
                potentials += a
    return potentials, caches


def _prechain_backward(chain: list, g: np.ndarray) -> np.ndarray:
    for step in reversed(chain):
        if step[0] == "pool":
            g = L.avgpool_backward(g, step[1], step[2])
        elif step[1] is not None:
            g = g * step[1]
    return g


def snn_gradients(net: Network, input_spikes: np.ndarray, labels: np.ndarray,
                  gamma: float = DEFAULT_GAMMA,
                  masks: dict[int, np.ndarray] | None = None
                  ) -> tuple[float, list[np.ndarray], np.ndarray]:
    """Loss, weight gradients, and output potentials for one batch.

    Backward runs layer-major from the output down: each block unrolls
    its own time recursion (membrane carry enters through d u_t / d p_t)
    and hands the per-step spike gradients to the block below.
    """
    cfg = net.config
    blocks = _blocks(net)
    potentials, caches = snn_forward(net, input_spikes, masks=masks)
    loss, g_pot = softmax_cross_entropy(potentials, labels)
    timesteps = input_spikes.shape[0]
    dtype = input_spikes.dtype
    leak = float(cfg.leak_lambda)

    grads = [np.zeros_like(net.weight_of(b.layer_idx)) for b in blocks]
    # Gradient w.r.t. each block's output spike train, filled top-down.
    g_out: list[np.ndarray | None] = [None] * timesteps

    for b in range(len(blocks) - 1, -1, -1):
        blk, cache = blocks[b], caches[b]
        w = net.weight_of(blk.layer_idx)
        g_below: list[np.ndarray | None] = [None] * timesteps
        g_u = None  # d loss / d u_t arriving from step t+1
        for t in range(timesteps - 1, -1, -1):
            if blk.spec.spiking:
                p = cache["p"][t]
                s = (p > blk.v_th).astype(dtype)
                sg = surrogate_grad(p, blk.v_th, gamma)
                g_spike = g_out[t]
                g_p = np.zeros_like(p) if g_spike is None else g_spike * sg
                if g_u is not None:
                    du_dp = s + (1.0 - s) * leak + sg * ((p - blk.v_th) - leak * p)
                    g_p += g_u * du_dp
                g_u = g_p
                g_a = g_p
            else:
                g_a = g_pot  # output potential accumulates every step
            x = cache["x"][t]
            if blk.spec.kind == L.CONV:
                g_x, g_w = L.conv_backward(x, w, g_a, blk.spec.stride,
                                           blk.spec.padding)
            else:
                g_flat, g_w = L.linear_backward(
                    x.reshape(x.shape[0], -1) if x.ndim > 2 else x, w, g_a)
                g_x = g_flat.reshape(x.shape)
            grads[b] += g_w
            if b > 0:
                g_below[t] = _prechain_backward(cache["prechain"], g_x)
        g_out = g_below

    return loss, grads, potentials


def snn_train_step(net: Network, optimizer: Adam, input_spikes: np.ndarray,
                   labels: np.ndarray, gamma: float,
                   masks: dict[int, np.ndarray] | None) -> tuple[float, float]:
    """One optimizer update; returns (loss, batch accuracy)."""
    loss, grads, potentials = snn_gradients(net, input_spikes, labels,
                                            gamma=gamma, masks=masks)
    if not np.isfinite(loss) or any(not np.isfinite(g).all() for g in grads):
        raise TrainingError("spiking fine-tune produced non-finite values")
    optimizer.step(net.weights, grads)
    acc = float(np.mean(np.argmax(potentials, axis=1) == labels))
    return loss, acc


def make_optimizer(net: Network, cfg: SnnTrainConfig) -> Adam:
    return Adam(net.weights, lr=cfg.lr, weight_decay=cfg.weight_decay)


def train_snn(net: Network, train_x: np.ndarray, train_y: np.ndarray,
              val_x: np.ndarray, val_y: np.ndarray, timesteps: int,
              cfg: SnnTrainConfig, optimizer: Adam | None = None,
              epoch_offset: int = 0, on_epoch=None) -> list[dict]:
    """Fine-tune a converted spiking network in place.

    The learning rate halves every `lr_halve_every` epochs, counted from
    epoch_offset so resumed runs continue the schedule. Zero epochs is a
    no-op. Returns per-epoch history rows.
    """
    if optimizer is None:
        optimizer = make_optimizer(net, cfg)
    history: list[dict] = []
    n = train_x.shape[0]
    for local_epoch in range(cfg.epochs):
        epoch = epoch_offset + local_epoch
        optimizer.lr = cfg.lr * (0.5 ** (epoch // cfg.lr_halve_every))
        order = rng_for(cfg.seed, SHUFFLE, 1000 + epoch).permutation(n)
        losses, correct = [], 0
        for bi, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            spikes = poisson_encode(train_x[idx], timesteps, seed=cfg.seed,
                                    sample_ids=idx, dtype=net.dtype)
            masks = make_dropout_masks(net, len(idx),
                                       rng_for(cfg.seed, DROPOUT, 2000 + epoch, bi))
            try:
                loss, acc = snn_train_step(net, optimizer, spikes,
                                           train_y[idx], cfg.gamma, masks)
            except TrainingError as e:
                raise TrainingError(str(e) + f" at epoch {epoch}", epoch=epoch)
            losses.append(loss)
            correct += int(round(acc * len(idx)))
        row = {
            "epoch": epoch,
            "lr": optimizer.lr,
            "train_loss": float(np.mean(losses)),
            "train_acc": correct / n,
            "val_acc": evaluate(net, val_x, val_y, timesteps, seed=cfg.seed),
            "timesteps": timesteps,
        }
        history.append(row)
        if on_epoch is not None:
            on_epoch(epoch, net, row)
    return history
