"""Weight sharing: Lloyd behavior against an exact dynamic-programming
oracle, storage-rate arithmetic against big rationals, and network-level
quantization semantics."""

import math
from fractions import Fraction

import numpy as np
import pytest

from snncompress.network import Network, build_config, init_weights
from snncompress.pipeline.datasets import load_synthetic
from snncompress.quantize import (Codebook, CompressionStats, compression_rate,
                                  kmeans_cluster, quantize_network)
from snncompress.simulate import evaluate
from snncompress.training.ann import AnnTrainConfig, train_ann
from snncompress.training.convert import convert_to_snn


def dp_kmeans_wcss(values, z):
    """Optimal 1-D k-means cost by dynamic programming over sorted data."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    ps = np.concatenate([[0.0], np.cumsum(x)])
    ps2 = np.concatenate([[0.0], np.cumsum(x * x)])

    def cost(i, j):  # points i..j inclusive
        s = ps[j + 1] - ps[i]
        s2 = ps2[j + 1] - ps2[i]
        return max(s2 - s * s / (j - i + 1), 0.0)

    inf = float("inf")
    d = np.full((z + 1, n + 1), inf)
    d[0, 0] = 0.0
    for k in range(1, z + 1):
        for j in range(k, n + 1):
            d[k, j] = min(d[k - 1, i] + cost(i, j - 1)
                          for i in range(k - 1, j))
    return float(d[z, n])


def wcss_of(book, weights):
    return float(((weights.ravel() - book.values()) ** 2).sum())


# ---------------------------------------------------------------- lloyd

def test_separable_pairs_recover_exact_centroids():
    w = np.array([1.0, 1.0, 5.0, 5.0])
    book = kmeans_cluster(w, 2)
    np.testing.assert_array_equal(np.sort(book.centroids), [1.0, 5.0])
    assert wcss_of(book, w) == 0.0


def test_single_cluster_of_equal_weights():
    w = np.full(7, 3.25)
    book = kmeans_cluster(w, 1)
    np.testing.assert_array_equal(book.centroids, [3.25])
    assert wcss_of(book, w) == 0.0


def test_random_weights_near_dp_optimum():
    rng = np.random.default_rng(0)
    w = rng.normal(size=64)
    book = kmeans_cluster(w, 4)
    assert wcss_of(book, w) <= dp_kmeans_wcss(w, 4) * 1.05 + 1e-12


def test_dp_oracle_bound_across_sizes_and_distributions():
    rng = np.random.default_rng(5)
    draws = {
        "normal": lambda n: rng.normal(size=n),
        "uniform": lambda n: rng.uniform(-1, 1, size=n),
        "bimodal": lambda n: np.concatenate([rng.normal(-2, 0.3, n // 2),
                                             rng.normal(1, 0.5, n - n // 2)]),
        "lognormal": lambda n: rng.lognormal(size=n),
    }
    for name, draw in draws.items():
        for n, z in ((32, 2), (64, 4), (128, 8), (256, 4), (256, 16)):
            w = draw(n)
            book = kmeans_cluster(w, z)
            got = wcss_of(book, w)
            opt = dp_kmeans_wcss(w, z)
            assert got <= opt * 1.05 + 1e-12, (name, n, z, got, opt)


def test_wcss_never_increases_across_iterations():
    rng = np.random.default_rng(9)
    for trial in range(100):
        n = int(rng.integers(10, 120))
        z = int(rng.integers(2, 9))
        w = rng.normal(size=n) * float(rng.uniform(0.1, 4.0))
        trace = []
        kmeans_cluster(w, z, wcss_trace=trace)
        for a, b in zip(trace, trace[1:]):
            assert b <= a * (1 + 1e-12) + 1e-15, f"trial {trial}: {a} -> {b}"


def test_ties_assign_to_lower_index():
    # 0.5 sits exactly between the two stable centroids 0 and 1.
    w = np.array([0.0, 0.0, 1.0, 1.0, 0.5])
    book = kmeans_cluster(w, 2, wcss_trace=[])
    mid = book.assignments[-1]
    d0 = abs(w[-1] - book.centroids[0])
    d1 = abs(w[-1] - book.centroids[1])
    if d0 == d1:
        assert mid == 0


def test_distinct_shortfall_shrinks_with_warning():
    w = np.array([2.0, 2.0, -1.0, 2.0])
    with pytest.warns(UserWarning):
        book = kmeans_cluster(w, 4)
    assert book.n_clusters == 2
    np.testing.assert_array_equal(book.values(), w)


def test_kmeans_input_validation():
    with pytest.raises(ValueError):
        kmeans_cluster(np.array([]), 2)
    with pytest.raises(ValueError):
        kmeans_cluster(np.array([1.0, np.nan]), 2)
    with pytest.raises(ValueError):
        kmeans_cluster(np.ones(4), 0)


def test_codebook_validation():
    with pytest.raises(ValueError):
        Codebook(0, np.array([0.1, np.inf]), np.array([0, 1]))
    with pytest.raises(ValueError):
        Codebook(0, np.array([0.1, 0.2]), np.array([0, 2]))
    book = Codebook(3, np.array([0.5, 1.5]), np.array([1, 0, 1]))
    np.testing.assert_array_equal(book.values(), [1.5, 0.5, 1.5])


# ----------------------------------------------------------------- rate

def test_rate_reference_values():
    oracle = Fraction(32000, 1000 * 5 + 32 * 32)
    assert compression_rate(1000, 32, 32) == pytest.approx(float(oracle),
                                                           rel=1e-12)
    assert compression_rate(16, 32, 4) == pytest.approx(3.2, rel=1e-12)
    assert compression_rate(4, 32, 4) == pytest.approx(128 / 136, rel=1e-12)


def test_rate_can_dip_below_one_for_tiny_p():
    assert compression_rate(4, 32, 4) < 1.0


def test_rate_asymptote_near_one():
    # b = log2(z) and codebook overhead vanishing against p.
    r = compression_rate(10**9, 8, 256)
    assert r == pytest.approx(1.0, abs=1e-5)
    assert r < 1.0


def test_rate_fuzz_against_fractions():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p = int(rng.integers(1, 10**6))
        b = int(rng.integers(1, 65))
        k = int(rng.integers(0, 11))
        z = 2 ** k
        oracle = Fraction(p * b, p * k + z * b)
        assert compression_rate(p, b, z) == pytest.approx(float(oracle),
                                                          rel=1e-12)


def test_rate_validation():
    with pytest.raises(ValueError):
        compression_rate(100, 32, 0)
    with pytest.raises(ValueError):
        compression_rate(0, 32, 4)
    with pytest.raises(ValueError):
        compression_rate(100, 0, 4)


# ------------------------------------------------------------- networks

def small_net(seed=0, dtype=np.float32):
    cfg = build_config((1, 6, 6), 2, [
        {"kind": "conv", "out_channels": 4},
        {"kind": "linear"},
    ])
    net = init_weights(cfg, seed=seed, dtype=dtype)
    return Network(net.config.with_thresholds([1.0]), net.weights)


def test_quantize_network_replaces_weights_with_centroids():
    net = small_net()
    res = quantize_network(net, bits=3)
    assert res.bits == 3
    for book, (w, i) in zip(res.codebooks,
                            [(res.network.weight_of(i), i)
                             for i in net.config.weighted_indices()]):
        assert book.layer_index == i
        assert book.n_clusters <= 8
        np.testing.assert_array_equal(w.ravel(), book.values())
        assert np.unique(w).size <= 8
    # Original net untouched.
    assert not np.array_equal(net.weights[0], res.network.weights[0])


def test_quantize_is_idempotent_at_same_bits():
    net = small_net()
    once = quantize_network(net, bits=2)
    twice = quantize_network(once.network, bits=2)
    for a, b in zip(once.network.weights, twice.network.weights):
        np.testing.assert_array_equal(a, b)


def test_quantize_at_32_bits_is_lossless_with_warning():
    net = small_net()
    with pytest.warns(UserWarning):
        res = quantize_network(net, bits=32)
    for a, b in zip(net.weights, res.network.weights):
        np.testing.assert_array_equal(a, b)
    for s in res.stats:
        assert s.z == np.unique(net.weight_of(s.layer_index)).size


def test_quantize_stats_match_rate_formula():
    net = small_net()
    res = quantize_network(net, bits=4)
    for s in res.stats:
        w = net.weight_of(s.layer_index)
        assert s.p == w.size
        assert s.b == 32
        oracle = Fraction(s.p * s.b) / (s.p * Fraction(math.log2(s.z))
                                        + s.z * s.b)
        assert s.r == pytest.approx(float(oracle), rel=1e-12)
        assert s.as_dict()["z"] == s.z
    assert res.overall_rate > 1.0


def test_quantize_bits_validation():
    net = small_net()
    for bad in (0, 33, -1, 2.5, "4", True):
        with pytest.raises(ValueError):
            quantize_network(net, bits=bad)


def test_accuracy_monotone_in_bits_majority_of_seeds():
    # Coarser codebooks cannot help on aggregate: for at least 2 of 3
    # seeds the spiking accuracy is non-decreasing from 2 to 8 bits.
    wins = 0
    for seed in (0, 1, 2):
        ds = load_synthetic(n_train=500, n_test=200, n_classes=2, size=8,
                            noise=0.1, jitter=1, seed=41 + seed)
        cfg = build_config((1, 8, 8), 2, [
            {"kind": "conv", "out_channels": 8},
            {"kind": "avgpool", "size": 2},
            {"kind": "linear"},
        ])
        net = init_weights(cfg, seed=seed)
        train_ann(net, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
                  AnnTrainConfig(epochs=8, batch_size=32, lr=0.05, seed=seed))
        snn, _ = convert_to_snn(net, ds.train_x[:64], timesteps=10, seed=0)
        accs = []
        for bits in (2, 3, 4, 5, 8):
            q = quantize_network(snn, bits=bits)
            accs.append(evaluate(q.network, ds.test_x, ds.test_y,
                                 timesteps=10, seed=1))
        if all(a <= b for a, b in zip(accs, accs[1:])):
            wins += 1
    assert wins >= 2, f"monotone on {wins}/3 seeds"
