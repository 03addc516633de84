"""Rate coding of images into spike trains.

A pixel normalized to [-1, 1] fires a Bernoulli event each timestep with
probability |pixel| (clamped to [0, 1]) and polarity sign(pixel), giving
input spikes in {-1, 0, +1}. Spike tensors are laid out (T, N, C, H, W).

Randomness is counter-based per sample: the stream for sample k depends
only on (seed, k), never on batch boundaries, so a dataset encodes
identically whatever the batch size.
"""

from __future__ import annotations

import numpy as np

from .rng import NOISE, POISSON, rng_for


def poisson_encode(images: np.ndarray, timesteps: int, seed: int = 0,
                   sample_ids: np.ndarray | None = None,
                   dtype=np.float32) -> np.ndarray:
    """Encode (N, C, H, W) images into a (T, N, C, H, W) spike tensor.

    `sample_ids` gives each row its stream identity (defaults to
    0..N-1); pass dataset indices when encoding a shuffled batch so the
    spikes for a given sample do not depend on its batch position.
    """
    if images.ndim != 4:
        raise ValueError(f"expected (N, C, H, W) images, got shape {images.shape}")
    if timesteps <= 0:
        raise ValueError(f"timesteps must be positive, got {timesteps}")
    n = images.shape[0]
    if sample_ids is None:
        sample_ids = np.arange(n)
    ids = np.asarray(sample_ids)
    if ids.shape != (n,):
        raise ValueError(f"sample_ids shape {ids.shape} != ({n},)")

    prob = np.clip(np.abs(images), 0.0, 1.0)
    sign = np.sign(images).astype(dtype)
    out = np.empty((timesteps,) + images.shape, dtype=dtype)
    for i in range(n):
        u = rng_for(seed, POISSON, int(ids[i])).random((timesteps,) + images.shape[1:])
        out[:, i] = (u < prob[i]).astype(dtype) * sign[i]
    return out


def add_gaussian_noise(images: np.ndarray, sigma: float, seed: int = 0,
                       sample_ids: np.ndarray | None = None,
                       stream_tag: int = 0) -> np.ndarray:
    """Corrupt normalized images with N(0, sigma^2) pixel noise, clipped
    back to [-1, 1]. sigma=0 returns an identical copy.

    `stream_tag` separates draws for different corruption levels of the
    same sample (e.g. the index of sigma in a sweep).
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if images.ndim != 4:
        raise ValueError(f"expected (N, C, H, W) images, got shape {images.shape}")
    if sigma == 0:
        return images.copy()
    n = images.shape[0]
    if sample_ids is None:
        sample_ids = np.arange(n)
    out = np.empty_like(images)
    for i in range(n):
        g = rng_for(seed, NOISE, int(stream_tag), int(sample_ids[i])).standard_normal(
            images.shape[1:])
        out[i] = images[i] + sigma * g.astype(images.dtype)
    np.clip(out, -1.0, 1.0, out=out)
    return out
