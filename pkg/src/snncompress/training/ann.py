"""Analog pre-training of the iso-architecture network.

The analog twin replaces every hidden integrate-and-fire layer with
ReLU and reads the output layer as plain logits. Training is SGD with
momentum and L2 decay, cross-entropy loss, and a step learning-rate
schedule that divides by a fixed factor at evenly spaced milestones
(one drop per third of the budget by default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import layers as L
from ..errors import TrainingError
from ..network import Network
from ..rng import AUGMENT, DROPOUT, SHUFFLE, rng_for
from .optim import SGDMomentum


@dataclass
class AnnTrainConfig:
    epochs: int
    batch_size: int = 64
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_drop_every: int | None = None  # default: floor(epochs / 3)
    lr_drop_factor: float = 10.0
    augment: bool = False
    aug_pad: int = 4
    aug_flip_p: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size <= 0:
            raise ValueError("batch size must be positive")
        if self.lr <= 0 or self.lr_drop_factor <= 1.0:
            raise ValueError("lr must be positive and drop factor > 1")

    def drop_every(self) -> int:
        if self.lr_drop_every is not None:
            if self.lr_drop_every <= 0:
                raise ValueError("lr_drop_every must be positive")
            return self.lr_drop_every
        return max(1, self.epochs // 3)


def ann_forward(net: Network, x: np.ndarray, training: bool = False,
                masks: dict[int, np.ndarray] | None = None
                ) -> tuple[np.ndarray, list]:
    """Forward through the analog twin. Returns (logits, cache); the
    cache holds what the backward pass needs, one entry per layer."""
    cfg = net.config
    cache: list[tuple] = []
    for i, spec in enumerate(cfg.layers):
        if spec.kind == L.DROPOUT:
            if training:
                if masks is None or i not in masks:
                    raise ValueError("training-mode forward needs dropout masks")
                mask = masks[i]
                cache.append(("dropout", mask))
                x = x * mask
            else:
                cache.append(("dropout", None))
        elif spec.kind == L.AVGPOOL:
            cache.append(("pool", x.shape))
            x = L.avgpool_forward(x, spec.pool)
        else:
            w = net.weight_of(i)
            cache.append((spec.kind, x))
            if spec.kind == L.CONV:
                x = L.conv_forward(x, w, spec.stride, spec.padding)
            else:
                x = L.linear_forward(x, w)
            if spec.spiking:  # hidden analog unit: ReLU
                cache.append(("relu", x))
                x = np.maximum(x, 0.0)
    return x, cache


def ann_backward(net: Network, cache: list, g_out: np.ndarray
                 ) -> list[np.ndarray]:
    """Gradients for every weight array given d loss / d logits."""
    cfg = net.config
    widx = cfg.weighted_indices()
    grads: dict[int, np.ndarray] = {}
    g = g_out
    layer_iter = list(enumerate(cfg.layers))
    pos = len(cache)
    for i, spec in reversed(layer_iter):
        if spec.has_weights and spec.spiking:
            pos -= 1
            tag, pre = cache[pos]
            assert tag == "relu"
            g = g * (pre > 0)
        pos -= 1
        tag, payload = cache[pos]
        if spec.kind == L.DROPOUT:
            if payload is not None:
                g = g * payload
        elif spec.kind == L.AVGPOOL:
            g = L.avgpool_backward(g, payload, spec.pool)
        elif spec.kind == L.CONV:
            g, g_w = L.conv_backward(payload, net.weight_of(i), g,
                                     spec.stride, spec.padding)
            grads[i] = g_w
        else:
            g, g_w = L.linear_backward(payload, net.weight_of(i), g)
            grads[i] = g_w
    return [grads[i] for i in widx]


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray
                          ) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    eps = np.finfo(probs.dtype).tiny
    loss = float(-np.mean(np.log(probs[np.arange(n), labels] + eps)))
    g = probs.copy()
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


def augment_batch(x: np.ndarray, rng: np.random.Generator, pad: int,
                  flip_p: float) -> np.ndarray:
    """Random shift (zero-pad in normalized space = -1) and horizontal
    flip, drawn per sample."""
    n, c, h, w = x.shape
    out = np.empty_like(x)
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                    constant_values=-1.0)
    offs = rng.integers(0, 2 * pad + 1, size=(n, 2))
    flips = rng.random(n) < flip_p
    for i in range(n):
        dy, dx = offs[i]
        crop = padded[i, :, dy:dy + h, dx:dx + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out


def make_dropout_masks(net: Network, n: int, rng: np.random.Generator
                       ) -> dict[int, np.ndarray]:
    """One mask per dropout layer per sample; reused for every timestep
    of the presentation."""
    cfg = net.config
    shapes = cfg.layer_shapes()
    masks: dict[int, np.ndarray] = {}
    for i, spec in enumerate(cfg.layers):
        if spec.kind == L.DROPOUT:
            in_shape = cfg.input_shape if i == 0 else shapes[i - 1]
            masks[i] = L.dropout_mask(rng, (n,) + in_shape, spec.rate,
                                      dtype=net.dtype)
    return masks


def ann_evaluate(net: Network, images: np.ndarray, labels: np.ndarray,
                 batch_size: int = 512) -> float:
    correct = 0
    for lo in range(0, images.shape[0], batch_size):
        logits, _ = ann_forward(net, images[lo:lo + batch_size])
        correct += int(np.sum(np.argmax(logits, axis=1) == labels[lo:lo + batch_size]))
    return correct / images.shape[0]


def train_ann(net: Network, train_x: np.ndarray, train_y: np.ndarray,
              val_x: np.ndarray, val_y: np.ndarray, cfg: AnnTrainConfig,
              on_epoch=None) -> list[dict]:
    """Train the analog twin in place; returns per-epoch history rows.

    Zero epochs is a no-op that leaves the initialization untouched.
    Divergence (non-finite loss) raises TrainingError with the epoch.
    """
    opt = SGDMomentum(net.weights, lr=cfg.lr, momentum=cfg.momentum,
                      weight_decay=cfg.weight_decay)
    history: list[dict] = []
    n = train_x.shape[0]
    drop_every = cfg.drop_every()
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr / (cfg.lr_drop_factor ** (epoch // drop_every))
        order = rng_for(cfg.seed, SHUFFLE, epoch).permutation(n)
        losses, correct = [], 0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            x, y = train_x[idx], train_y[idx]
            if cfg.augment:
                x = augment_batch(x, rng_for(cfg.seed, AUGMENT, epoch, b),
                                  cfg.aug_pad, cfg.aug_flip_p)
            masks = make_dropout_masks(net, x.shape[0],
                                       rng_for(cfg.seed, DROPOUT, epoch, b))
            logits, cache = ann_forward(net, x, training=True, masks=masks)
            loss, g = softmax_cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise TrainingError(f"analog training diverged at epoch {epoch}",
                                    epoch=epoch)
            grads = ann_backward(net, cache, g)
            opt.step(net.weights, grads)
            losses.append(loss)
            correct += int(np.sum(np.argmax(logits, axis=1) == y))
        row = {
            "epoch": epoch,
            "lr": opt.lr,
            "train_loss": float(np.mean(losses)),
            "train_acc": correct / n,
            "val_acc": ann_evaluate(net, val_x, val_y),
        }
        history.append(row)
        if on_epoch is not None:
            on_epoch(epoch, net, row)
    return history
