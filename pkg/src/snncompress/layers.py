"""Layer specifications and numpy compute kernels.

One kernel set serves both the analog (ReLU) network and the spiking
network: convolution via im2col, fully-connected matmul, non-overlapping
average pooling, and inverted dropout. Convolutions and linear maps have
no bias term. All kernels are pure functions over ndarrays; backward
passes recompute the cheap intermediates (im2col patches) rather than
caching them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CONV = "conv"
LINEAR = "linear"
AVGPOOL = "avgpool"
DROPOUT = "dropout"

_KINDS = (CONV, LINEAR, AVGPOOL, DROPOUT)


@dataclass(frozen=True)
class LayerSpec:
    """Static description of one layer.

    Which fields are meaningful depends on `kind`:

    - conv:    k_h, k_w, c_in, c_out, stride, padding, spiking
    - linear:  n_in, n_out, spiking
    - avgpool: pool (window edge; stride equals the window)
    - dropout: rate

    `spiking` marks hidden layers whose units integrate-and-fire (the
    analog twin uses ReLU there). The output layer is the one weighted
    layer with spiking=False: it accumulates without firing.
    """

    kind: str
    k_h: int = 0
    k_w: int = 0
    c_in: int = 0
    c_out: int = 0
    stride: int = 1
    padding: int = 0
    n_in: int = 0
    n_out: int = 0
    pool: int = 0
    rate: float = 0.0
    spiking: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == CONV:
            if min(self.k_h, self.k_w, self.c_in, self.c_out) <= 0:
                raise ValueError("conv dimensions must be positive")
            if self.stride <= 0 or self.padding < 0:
                raise ValueError("conv stride must be positive, padding non-negative")
        elif self.kind == LINEAR:
            if self.n_in <= 0 or self.n_out <= 0:
                raise ValueError("linear dimensions must be positive")
        elif self.kind == AVGPOOL:
            if self.pool <= 0:
                raise ValueError("pool window must be positive")
        elif self.kind == DROPOUT:
            if not 0.0 <= self.rate < 1.0:
                raise ValueError("dropout rate must lie in [0, 1)")

    @property
    def has_weights(self) -> bool:
        return self.kind in (CONV, LINEAR)

    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == CONV:
            return (self.c_out, self.c_in, self.k_h, self.k_w)
        if self.kind == LINEAR:
            return (self.n_out, self.n_in)
        raise ValueError(f"{self.kind} layer has no weights")

    def n_params(self) -> int:
        if not self.has_weights:
            return 0
        n = 1
        for d in self.weight_shape():
            n *= d
        return n

    def fan_in(self) -> int:
        if self.kind == CONV:
            return self.c_in * self.k_h * self.k_w
        if self.kind == LINEAR:
            return self.n_in
        raise ValueError(f"{self.kind} layer has no fan-in")


def conv_spec(c_in: int, c_out: int, kernel: int = 3, stride: int = 1,
              padding: int = 1, spiking: bool = True) -> LayerSpec:
    return LayerSpec(CONV, k_h=kernel, k_w=kernel, c_in=c_in, c_out=c_out,
                     stride=stride, padding=padding, spiking=spiking)


def linear_spec(n_in: int, n_out: int, spiking: bool = False) -> LayerSpec:
    return LayerSpec(LINEAR, n_in=n_in, n_out=n_out, spiking=spiking)


def avgpool_spec(pool: int = 2) -> LayerSpec:
    return LayerSpec(AVGPOOL, pool=pool)


def dropout_spec(rate: float) -> LayerSpec:
    return LayerSpec(DROPOUT, rate=rate)


def with_width(spec: LayerSpec, c_in: int | None = None,
               c_out: int | None = None) -> LayerSpec:
    """Copy a conv spec with rewired channel counts (used by pruning)."""
    if spec.kind != CONV:
        raise ValueError("with_width applies to conv layers")
    return replace(spec,
                   c_in=spec.c_in if c_in is None else c_in,
                   c_out=spec.c_out if c_out is None else c_out)


def out_shape(spec: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Shape of one sample's output given one sample's input shape.

    Linear layers flatten whatever they receive.
    """
    if spec.kind == CONV:
        c, h, w = in_shape
        if c != spec.c_in:
            raise ValueError(f"conv expects {spec.c_in} input channels, got {c}")
        oh = (h + 2 * spec.padding - spec.k_h) // spec.stride + 1
        ow = (w + 2 * spec.padding - spec.k_w) // spec.stride + 1
        if oh <= 0 or ow <= 0:
            raise ValueError(f"conv output collapses on input {in_shape}")
        return (spec.c_out, oh, ow)
    if spec.kind == AVGPOOL:
        c, h, w = in_shape
        oh, ow = h // spec.pool, w // spec.pool
        if oh <= 0 or ow <= 0:
            raise ValueError(f"pool window {spec.pool} exceeds input {in_shape}")
        return (c, oh, ow)
    if spec.kind == LINEAR:
        n = 1
        for d in in_shape:
            n *= d
        if n != spec.n_in:
            raise ValueError(f"linear expects {spec.n_in} inputs, got {n} from {in_shape}")
        return (spec.n_out,)
    return tuple(in_shape)  # dropout


def _im2col(x: np.ndarray, k_h: int, k_w: int, stride: int,
            padding: int) -> np.ndarray:
    """(N, C, H, W) -> (N, oh*ow, C*k_h*k_w) patch matrix."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c, h, w = x.shape
    if h < k_h or w < k_w:
        raise ValueError(f"kernel ({k_h}x{k_w}) larger than padded input ({h}x{w})")
    win = sliding_window_view(x, (k_h, k_w), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, oh, ow, _, _ = win.shape
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n, oh * ow, c * k_h * k_w)


def conv_forward(x: np.ndarray, w: np.ndarray, stride: int = 1,
                 padding: int = 0) -> np.ndarray:
    """Cross-correlation of (N, C, H, W) with (c_out, C, k_h, k_w), no bias."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv shape mismatch: input {x.shape}, weights {w.shape}")
    c_out, _, k_h, k_w = w.shape
    cols = _im2col(x, k_h, k_w, stride, padding)
    n = x.shape[0]
    oh = (x.shape[2] + 2 * padding - k_h) // stride + 1
    ow = (x.shape[3] + 2 * padding - k_w) // stride + 1
    y = cols @ w.reshape(c_out, -1).T
    return y.transpose(0, 2, 1).reshape(n, c_out, oh, ow)


def conv_backward(x: np.ndarray, w: np.ndarray, g_y: np.ndarray,
                  stride: int = 1, padding: int = 0
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Gradients (g_x, g_w) of a conv given upstream g_y (N, c_out, oh, ow)."""
    c_out, c_in, k_h, k_w = w.shape
    n, _, oh, ow = g_y.shape
    cols = _im2col(x, k_h, k_w, stride, padding)
    gf = g_y.reshape(n, c_out, oh * ow).transpose(0, 2, 1)
    g_w = np.einsum("npo,npk->ok", gf, cols).reshape(w.shape)
    g_cols = (gf @ w.reshape(c_out, -1)).reshape(n, oh, ow, c_in, k_h, k_w)

    hp, wp = x.shape[2] + 2 * padding, x.shape[3] + 2 * padding
    g_xp = np.zeros((n, c_in, hp, wp), dtype=g_y.dtype)
    for i in range(k_h):
        for j in range(k_w):
            g_xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                g_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if padding:
        g_xp = g_xp[:, :, padding:hp - padding, padding:wp - padding]
    return g_xp, g_w


def linear_forward(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(N, n_in) @ (n_out, n_in)^T, no bias. Higher-rank inputs are flattened."""
    if x.ndim > 2:
        x = x.reshape(x.shape[0], -1)
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"linear shape mismatch: input {x.shape}, weights {w.shape}")
    return x @ w.T


def linear_backward(x: np.ndarray, w: np.ndarray, g_y: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray]:
    orig_shape = x.shape
    if x.ndim > 2:
        x = x.reshape(x.shape[0], -1)
    g_w = g_y.T @ x
    g_x = g_y @ w
    return g_x.reshape(orig_shape), g_w


def avgpool_forward(x: np.ndarray, pool: int) -> np.ndarray:
    """Non-overlapping mean pooling; trailing rows/cols that do not fill a
    window are dropped."""
    n, c, h, w = x.shape
    oh, ow = h // pool, w // pool
    if oh <= 0 or ow <= 0:
        raise ValueError(f"pool window {pool} exceeds input {x.shape}")
    xc = x[:, :, :oh * pool, :ow * pool]
    return xc.reshape(n, c, oh, pool, ow, pool).mean(axis=(3, 5))


def avgpool_backward(g_y: np.ndarray, in_shape: tuple[int, ...],
                     pool: int) -> np.ndarray:
    n, c, h, w = in_shape
    oh, ow = g_y.shape[2], g_y.shape[3]
    g = np.broadcast_to((g_y / (pool * pool))[:, :, :, None, :, None],
                        (n, c, oh, pool, ow, pool)).reshape(n, c, oh * pool, ow * pool)
    if (oh * pool, ow * pool) == (h, w):
        return np.ascontiguousarray(g)
    g_x = np.zeros(in_shape, dtype=g_y.dtype)
    g_x[:, :, :oh * pool, :ow * pool] = g
    return g_x


def dropout_mask(rng: np.random.Generator, shape: tuple[int, ...],
                 rate: float, dtype=np.float32) -> np.ndarray:
    """Inverted-dropout multiplier: kept units scale by 1/(1-rate).

    Callers draw one mask per sample per presentation and reuse it for
    every timestep, so a unit dropped at t=0 stays dropped for the whole
    spike train.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if rate == 0.0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / np.dtype(dtype).type(1.0 - rate)


def layer_apply(spec: LayerSpec, weights: np.ndarray | None, x: np.ndarray,
                *, mask: np.ndarray | None = None,
                training: bool = False) -> np.ndarray:
    """Apply one layer's weighted-input computation for a single timestep.

    Dropout is the identity outside training; in training it multiplies by
    the caller-provided mask (see `dropout_mask`).
    """
    if spec.kind == CONV:
        if weights is None:
            raise ValueError("conv layer requires weights")
        return conv_forward(x, weights, spec.stride, spec.padding)
    if spec.kind == LINEAR:
        if weights is None:
            raise ValueError("linear layer requires weights")
        return linear_forward(x, weights)
    if spec.kind == AVGPOOL:
        return avgpool_forward(x, spec.pool)
    # dropout
    if not training:
        return x
    if mask is None:
        raise ValueError("training-mode dropout requires a mask")
    return x * mask
