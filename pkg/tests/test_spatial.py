"""Width pruning: rank recovery, depth reduction on the reference width
tables, activation collection semantics, and architecture rebuild."""

import dataclasses
import json

import numpy as np
import pytest

from snncompress import layers as L
from snncompress.errors import DegenerateInputError
from snncompress.network import Network, NetworkConfig, build_config, init_weights
from snncompress.pipeline.datasets import load_synthetic
from snncompress.spatial import (PruneReport, build_pruned_config,
                                 collect_activations, depth_reduce,
                                 prune_spatial, significant_dims)
from snncompress.training.ann import AnnTrainConfig, train_ann
from snncompress.training.convert import convert_to_snn


# ---------------------------------------------------------------- dims

def hadamard(n):
    # Sylvester construction; columns 1.. are orthogonal with zero mean.
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


def low_rank_matrix(s, m, r, rng, noise_db=None):
    """Rank-r matrix with zero column means and singular values in
    [0.5, 2], optionally plus white noise at the given SNR in dB."""
    g = rng.standard_normal((s, r))
    g -= g.mean(axis=0)
    u = np.linalg.qr(g)[0]
    v = np.linalg.qr(rng.standard_normal((m, r)))[0]
    sv = rng.uniform(0.5, 2.0, size=r)
    x = (u * sv) @ v.T
    if noise_db is not None:
        signal = np.sum(x * x)
        sigma = np.sqrt(signal * 10.0 ** (-noise_db / 10.0) / x.size)
        x = x + rng.standard_normal(x.shape) * sigma
    return x


def test_duplicated_columns_give_one_dimension():
    rng = np.random.default_rng(0)
    col = rng.standard_normal(40)
    c = np.stack([col, col.copy()], axis=1)
    assert significant_dims(c) == 1


def test_isotropic_eight_column_matrix_needs_all_eight():
    # Orthogonal equal-norm zero-mean columns: every direction carries
    # 12.5% of the variance, so no 7-subset reaches 99.9%.
    c = hadamard(16)[:, 1:9]
    assert significant_dims(c) == 8
    assert significant_dims(c, threshold=0.5) == 4


def test_noiseless_rank_recovery_is_exact():
    rng = np.random.default_rng(7)
    for trial in range(50):
        r = int(rng.integers(1, 17))
        c = low_rank_matrix(48, 16, r, rng)
        assert significant_dims(c) == r, f"trial {trial}, rank {r}"
        assert significant_dims(c, threshold=0.42) <= r


def test_rank_recovery_survives_60db_noise():
    rng = np.random.default_rng(11)
    for trial in range(50):
        r = int(rng.integers(1, 17))
        c = low_rank_matrix(48, 16, r, rng, noise_db=60.0)
        assert significant_dims(c) == r, f"trial {trial}, rank {r}"


def test_dims_monotone_in_threshold():
    rng = np.random.default_rng(3)
    for _ in range(20):
        c = rng.standard_normal((30, 10)) * rng.uniform(0.1, 3.0, size=10)
        dims = [significant_dims(c, threshold=t)
                for t in (0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999, 1.0)]
        assert dims == sorted(dims)


def test_degenerate_matrices_rejected():
    with pytest.raises(DegenerateInputError):
        significant_dims(np.zeros((10, 3)))
    # Constant columns carry no variance once centered.
    with pytest.raises(DegenerateInputError):
        significant_dims(np.full((10, 3), 2.5))
    # Without centering a constant matrix is rank one.
    assert significant_dims(np.full((10, 3), 2.5), center=False) == 1


def test_dims_input_validation():
    with pytest.raises(ValueError):
        significant_dims(np.ones((2, 5)))  # fewer rows than columns
    with pytest.raises(ValueError):
        significant_dims(np.ones(10))
    bad = np.ones((10, 2))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        significant_dims(bad)
    with pytest.raises(ValueError):
        significant_dims(np.ones((10, 2)), threshold=0.0)
    with pytest.raises(ValueError):
        significant_dims(np.ones((10, 2)), threshold=1.5)


# -------------------------------------------------------- depth reduce

def test_depth_reduce_seven_layer_reference_row():
    dims = [34, 118, 123, 250, 244, 496, 503]
    kept = depth_reduce(dims)
    assert kept == [0, 1, 2, 3, 5, 6]
    assert [dims[i] for i in kept] == [34, 118, 123, 250, 496, 503]


def test_depth_reduce_eight_layer_reference_row():
    dims = [48, 114, 241, 497, 496, 484, 497, 500]
    kept = depth_reduce(dims)
    assert kept == [0, 1, 2, 3, 6, 7]
    assert [dims[i] for i in kept] == [48, 114, 241, 497, 497, 500]


def test_depth_reduce_monotone_dims_keep_everything():
    assert depth_reduce([3, 5, 9]) == [0, 1, 2]
    assert depth_reduce([4, 4, 4]) == [0, 1, 2]  # ties are kept
    assert depth_reduce([7]) == [0]


def test_depth_reduce_compares_against_last_retained_layer():
    # Two consecutive drops below 10: both measured against 10, not
    # against each other.
    assert depth_reduce([10, 8, 9, 12]) == [0, 3]


def test_depth_reduce_validation():
    with pytest.raises(ValueError):
        depth_reduce([])
    with pytest.raises(ValueError):
        depth_reduce([4, 0, 2])


# ---------------------------------------------------------- collection

def spiking_conv_net(widths, size=6, kernel=3, padding=1, thresholds=None,
                     leak=0.9901, seed=0, dtype=np.float64):
    defs = []
    for w in widths:
        defs.append({"kind": "conv", "out_channels": w, "kernel": kernel,
                     "padding": padding})
    defs.append({"kind": "linear"})
    cfg = build_config((1, size, size), 2, defs, leak_lambda=leak)
    net = init_weights(cfg, seed=seed, dtype=dtype)
    ths = thresholds if thresholds is not None else [1.0] * len(widths)
    return Network(net.config.with_thresholds(ths), net.weights)


def test_collect_shapes_and_conv_only_keys():
    net = spiking_conv_net([3, 4])
    images = np.random.default_rng(0).uniform(0, 1, size=(5, 1, 6, 6))
    mats = collect_activations(net, images, timesteps=4, seed=1)
    assert sorted(mats) == [0, 1]  # linear output layer not collected
    assert mats[0].shape == (5 * 6 * 6, 3)
    assert mats[1].shape == (5 * 6 * 6, 4)


def test_collect_zero_weights_give_zero_matrices():
    net = spiking_conv_net([3, 4])
    for w in net.weights:
        w[:] = 0.0
    images = np.full((4, 1, 6, 6), 0.8)
    mats = collect_activations(net, images, timesteps=5)
    for c in mats.values():
        np.testing.assert_array_equal(c, 0.0)


def test_collect_duplicated_filters_give_identical_columns():
    net = spiking_conv_net([4])
    w = net.weights[0]
    w[2] = w[0]
    w[3] = w[1]
    images = np.random.default_rng(5).uniform(-1, 1, size=(6, 1, 6, 6))
    c = collect_activations(net, images, timesteps=6, seed=2)[0]
    np.testing.assert_array_equal(c[:, 2], c[:, 0])
    np.testing.assert_array_equal(c[:, 3], c[:, 1])
    assert significant_dims(c) <= 2


def test_collect_constant_input_single_point_filter():
    # 1x1 kernel, no padding: every location sees the same drive, so
    # every row of the matrix is the same scalar.
    defs = [{"kind": "conv", "out_channels": 1, "kernel": 1, "padding": 0},
            {"kind": "linear"}]
    cfg = build_config((1, 4, 4), 2, defs)
    net = init_weights(cfg, seed=0, dtype=np.float64)
    net.weights[0][:] = 0.4
    net = Network(net.config.with_thresholds([1.0]), net.weights)
    images = np.ones((3, 1, 4, 4))  # rate-1 input: a spike every step
    c = collect_activations(net, images, timesteps=5)[0]
    assert c.shape == (3 * 4 * 4, 1)
    assert np.all(c == c[0, 0])
    assert c[0, 0] != 0.0


def test_collect_rejects_zero_timesteps_and_empty_set():
    net = spiking_conv_net([3])
    images = np.ones((2, 1, 6, 6))
    with pytest.raises(ValueError):
        collect_activations(net, images, timesteps=0)
    with pytest.raises(ValueError):
        collect_activations(net, images[:0], timesteps=4)


def test_collect_respects_max_samples():
    net = spiking_conv_net([3])
    images = np.random.default_rng(1).uniform(0, 1, size=(10, 1, 6, 6))
    c = collect_activations(net, images, timesteps=3, max_samples=4)[0]
    assert c.shape == (4 * 6 * 6, 3)


# ------------------------------------------------------------- rebuild

def parent_with_two_linears():
    return build_config((1, 8, 8), 4, [
        {"kind": "conv", "out_channels": 8},
        {"kind": "avgpool", "size": 2},
        {"kind": "conv", "out_channels": 12},
        {"kind": "dropout", "rate": 0.2},
        {"kind": "linear", "out_features": 32},
        {"kind": "dropout", "rate": 0.5},
        {"kind": "linear"},
    ])


def test_rebuild_collapses_head_to_single_linear():
    parent = parent_with_two_linears()
    pruned = build_pruned_config(parent, {0: 8, 2: 12}, [0, 2])
    kinds = [s.kind for s in pruned.layers]
    assert kinds == [L.CONV, L.AVGPOOL, L.CONV, L.DROPOUT, L.LINEAR]
    head = pruned.layers[-1]
    assert (head.n_in, head.n_out) == (12 * 4 * 4, 4)
    assert not head.spiking
    # Conv widths survive untouched when dims equal the originals.
    assert pruned.layers[0].c_out == 8
    assert pruned.layers[2].c_out == 12


def test_rebuild_shrinks_widths_and_rewires():
    parent = parent_with_two_linears()
    pruned = build_pruned_config(parent, {0: 5, 2: 7}, [0, 2])
    assert pruned.layers[0].c_out == 5
    assert pruned.layers[2].c_in == 5
    assert pruned.layers[2].c_out == 7
    assert pruned.layers[-1].n_in == 7 * 4 * 4
    assert pruned.n_params() < parent.n_params()


def test_rebuild_drops_removed_layer_and_rewires_across_it():
    parent = build_config((1, 8, 8), 2, [
        {"kind": "conv", "out_channels": 8},
        {"kind": "conv", "out_channels": 12},
        {"kind": "conv", "out_channels": 10},
        {"kind": "linear"},
    ])
    pruned = build_pruned_config(parent, {0: 8, 1: 6, 2: 9}, [0, 2])
    kinds = [s.kind for s in pruned.layers]
    assert kinds == [L.CONV, L.CONV, L.LINEAR]
    assert pruned.layers[0].c_out == 8
    assert pruned.layers[1].c_in == 8
    assert pruned.layers[1].c_out == 9


def test_rebuild_keeps_conv_geometry():
    parent = build_config((1, 9, 9), 3, [
        {"kind": "conv", "out_channels": 6, "kernel": 5, "padding": 2},
        {"kind": "linear"},
    ])
    pruned = build_pruned_config(parent, {0: 4}, [0])
    assert (pruned.layers[0].k_h, pruned.layers[0].padding) == (5, 2)
    assert pruned.layers[0].c_out == 4


def test_rebuild_rejects_zero_width_and_unknown_retained():
    parent = parent_with_two_linears()
    with pytest.raises(ValueError):
        build_pruned_config(parent, {0: 0, 2: 5}, [0, 2])
    with pytest.raises(ValueError):
        build_pruned_config(parent, {0: 4}, [0, 2])


# ------------------------------------------------------------- reports

def test_prune_report_fields_and_json():
    r = PruneReport(rows=((0, 8, 5, 5), (2, 12, 6, 0)), removed_layers=(2,),
                    parent_params=1000, pruned_params=400,
                    collapsed_linears=2, head=(80, 4))
    assert r.param_ratio == pytest.approx(0.4)
    d = json.loads(r.to_json())
    assert d["layers"][1] == {"layer_index": 2, "initial": 12,
                              "significant": 6, "final": 0}
    assert d["removed_layers"] == [2]
    assert d["head"] == {"n_in": 80, "n_out": 4}


def test_prune_report_validation():
    with pytest.raises(ValueError):
        PruneReport(rows=(), removed_layers=(), parent_params=100,
                    pruned_params=150, collapsed_linears=1, head=(4, 2))
    with pytest.raises(ValueError):
        PruneReport(rows=((0, 8, 9, 9),), removed_layers=(),
                    parent_params=100, pruned_params=50,
                    collapsed_linears=1, head=(4, 2))
    with pytest.raises(ValueError):
        PruneReport(rows=((0, 8, 5, 3),), removed_layers=(),
                    parent_params=100, pruned_params=50,
                    collapsed_linears=1, head=(4, 2))


# ----------------------------------------------------------- composite

def test_prune_spatial_shrinks_duplicated_filter_layer():
    # Second conv carries 3 duplicated filters (6 stored, 3 distinct):
    # the pruned width must drop at least to the distinct count.
    net = spiking_conv_net([4, 6], size=8, thresholds=[0.8, 0.8], seed=2)
    w = net.weights[1]
    w[3] = w[0]
    w[4] = w[1]
    w[5] = w[2]
    images = np.random.default_rng(4).uniform(-1, 1, size=(32, 1, 8, 8))
    pruned, report = prune_spatial(net, images, timesteps=8, seed=0)
    by_layer = {row[0]: row for row in report.rows}
    assert by_layer[1][1] == 6
    assert by_layer[1][2] <= 3
    assert report.parent_params == net.config.n_params()
    assert 0.0 < report.param_ratio < 1.0
    assert pruned.n_params() == report.pruned_params
    assert pruned.thresholds is None


def test_prune_spatial_report_matches_config():
    net = spiking_conv_net([4, 5], size=8, thresholds=[0.9, 0.9], seed=6)
    images = np.random.default_rng(9).uniform(-1, 1, size=(24, 1, 8, 8))
    pruned, report = prune_spatial(net, images, timesteps=6, seed=1)
    conv_widths = [s.c_out for s in pruned.layers if s.kind == L.CONV]
    finals = [row[3] for row in report.rows if row[3] > 0]
    assert conv_widths == finals
    assert report.head == (pruned.layers[-1].n_in, pruned.layers[-1].n_out)


def test_leak_independence_on_trained_desk_net():
    # Width estimates barely move across leak settings: at most one
    # dimension per layer between 0.95, 0.9901 and 1.0.
    ds = load_synthetic(n_train=400, n_test=100, n_classes=2, size=8,
                        noise=0.1, jitter=1, seed=12)
    cfg_net = build_config((1, 8, 8), 2, [
        {"kind": "conv", "out_channels": 16},
        {"kind": "avgpool", "size": 2},
        {"kind": "conv", "out_channels": 24},
        {"kind": "linear"},
    ])
    net = init_weights(cfg_net, seed=1)
    train_ann(net, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
              AnnTrainConfig(epochs=8, batch_size=32, lr=0.05, seed=1))
    snn, _ = convert_to_snn(net, ds.train_x[:64], timesteps=12, seed=0)

    dims_by_leak = {}
    for leak in (0.95, 0.9901, 1.0):
        cfg = dataclasses.replace(snn.config, leak_lambda=leak)
        variant = Network(cfg, snn.weights)
        mats = collect_activations(variant, ds.test_x, timesteps=12, seed=0,
                                   max_samples=64)
        dims_by_leak[leak] = [significant_dims(mats[i]) for i in sorted(mats)]
    base = dims_by_leak[0.9901]
    for leak, dims in dims_by_leak.items():
        diffs = [abs(a - b) for a, b in zip(dims, base)]
        assert max(diffs) <= 1, f"leak {leak}: dims {dims} vs {base}"
