"""Experiment config tests: defaults, strict unknown-key rejection,
type coercion, static architecture validation, hashing, and YAML round
trips."""

import numpy as np
import pytest

from snncompress import layers as L
from snncompress.errors import ConfigError
from snncompress.lif import DEFAULT_LEAK
from snncompress.pipeline.config import ExperimentConfig, load_config

MINIMAL = {
    "dataset": {"name": "synthetic"},
    "architecture": {"layers": [
        {"kind": "conv", "out_channels": 8},
        {"kind": "avgpool"},
        {"kind": "linear"},
    ]},
}


def make(extra=None, **top):
    raw = {k: dict(v) if isinstance(v, dict) else v for k, v in MINIMAL.items()}
    raw["architecture"] = {"layers": [dict(d) for d in MINIMAL["architecture"]["layers"]]}
    if extra:
        for k, v in extra.items():
            if isinstance(v, dict) and k in raw and isinstance(raw[k], dict):
                raw[k].update(v)
            else:
                raw[k] = v
    raw.update(top)
    return ExperimentConfig.from_dict(raw)


def test_minimal_config_defaults():
    cfg = make()
    assert cfg.seed == 0
    assert cfg.timesteps == 20
    assert cfg.resolved["quantize"]["bits"] == 5
    assert cfg.resolved["temporal"] == {"v": 1, "e": 1, "a_min": None,
                                        "a_min_drop": 0.03}
    assert cfg.resolved["analysis"]["sigmas"][0] == 0.0
    assert cfg.input_shape() == (1, 16, 16)
    assert cfg.n_classes() == 4


def test_unknown_top_level_key():
    with pytest.raises(ConfigError, match="unknown config keys.*datset"):
        make(extra={"datset": {"name": "synthetic"}})


def test_unknown_section_key():
    with pytest.raises(ConfigError, match="unknown keys in temporal.*vv"):
        make(extra={"temporal": {"vv": 2}})


def test_missing_dataset_name():
    with pytest.raises(ConfigError, match="dataset.name is required"):
        ExperimentConfig.from_dict({"architecture": MINIMAL["architecture"]})


def test_missing_layers():
    with pytest.raises(ConfigError, match="architecture.layers is required"):
        ExperimentConfig.from_dict({"dataset": {"name": "synthetic"},
                                    "architecture": {}})


def test_type_errors():
    with pytest.raises(ConfigError, match="seed: expected an integer"):
        make(seed="abc")
    with pytest.raises(ConfigError, match="quantize.bits"):
        make(extra={"quantize": {"bits": True}})
    with pytest.raises(ConfigError, match="spatial.center"):
        make(extra={"spatial": {"center": 1}})


def test_yaml_scientific_notation_strings_coerce():
    """YAML 1.1 parses 5e-4 (no dot) as a string; the loader coerces it."""
    cfg = make(extra={"snn": {"lr": "5e-4"}})
    assert cfg.resolved["snn"]["lr"] == 5e-4


def test_dataset_path_must_exist(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        make(extra={"dataset": {"name": "mnist",
                                "path": str(tmp_path / "nope")}})


def test_unknown_dataset_name():
    with pytest.raises(ConfigError, match="unknown dataset name"):
        make(extra={"dataset": {"name": "svhn"}})


def test_sigma_grid_needs_zero():
    with pytest.raises(ConfigError, match="must include 0.0"):
        make(extra={"analysis": {"sigmas": [0.1, 0.2]}})
    with pytest.raises(ConfigError, match="non-negative"):
        make(extra={"analysis": {"sigmas": [0.0, -0.1]}})


def test_architecture_dry_run_catches_bad_stack():
    with pytest.raises(ConfigError, match="architecture"):
        make(extra={"architecture": {"layers": [{"kind": "conv",
                                                 "out_channels": 8}]}})
    with pytest.raises(ConfigError, match="architecture"):
        make(extra={"architecture": {"layers": [
            {"kind": "conv", "out_channels": 8, "kernal": 3},
            {"kind": "linear"},
        ]}})


def test_bounds_checks():
    with pytest.raises(ConfigError, match="timesteps"):
        make(timesteps=1)
    with pytest.raises(ConfigError, match="bits"):
        make(extra={"quantize": {"bits": 0}})
    with pytest.raises(ConfigError, match="a_min_drop"):
        make(extra={"temporal": {"a_min_drop": 0.0}})
    with pytest.raises(ConfigError, match="spatial.threshold"):
        make(extra={"spatial": {"threshold": 1.5}})


def test_train_config_mapping():
    cfg = make(seed=7, extra={"ann": {"epochs": 3, "lr": 0.2},
                              "snn": {"epochs": 2, "lr_halve_every": 4}})
    a = cfg.ann_config()
    assert (a.epochs, a.lr, a.seed) == (3, 0.2, 7)
    assert a.momentum == 0.9
    s = cfg.snn_config()
    assert (s.epochs, s.lr_halve_every, s.seed) == (2, 4, 7)


def test_network_config_builds():
    cfg = make(extra={"architecture": {"leak": 0.95}})
    nc = cfg.network_config()
    assert nc.input_shape == (1, 16, 16)
    assert nc.leak_lambda == 0.95
    assert nc.layers[0].kind == L.CONV
    assert nc.layers[-1].n_out == 4


def test_network_config_default_leak():
    assert make().network_config().leak_lambda == DEFAULT_LEAK


def test_dataset_spec_injects_seed():
    cfg = make(seed=9, extra={"dataset": {"name": "synthetic", "n_train": 100}})
    spec = cfg.dataset_spec()
    assert spec["seed"] == 9
    assert spec["n_train"] == 100
    assert "n_test" not in spec  # unset options stay defaulted downstream


def test_hash_stability_and_section_scoping():
    a = make()
    b = make()
    assert a == b
    assert a.config_hash() == b.config_hash()
    c = make(extra={"quantize": {"bits": 4}})
    assert c.config_hash() != a.config_hash()
    assert c.config_hash(("quantize",)) != a.config_hash(("quantize",))
    assert c.config_hash(("ann", "dataset")) == a.config_hash(("ann", "dataset"))


def test_yaml_round_trip(tmp_path):
    cfg = make(seed=3, extra={"snn": {"lr": 0.0007}})
    p = tmp_path / "exp.yaml"
    p.write_text(cfg.to_yaml())
    back = load_config(str(p))
    assert back == cfg
    assert back.config_hash() == cfg.config_hash()


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "none.yaml"))


def test_load_config_invalid_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("dataset: [unclosed\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(str(p))


def test_load_config_relative_dataset_path(tmp_path):
    (tmp_path / "data").mkdir()
    p = tmp_path / "exp.yaml"
    p.write_text(
        "dataset: {name: mnist, path: data}\n"
        "architecture:\n"
        "  layers:\n"
        "    - {kind: conv, out_channels: 4}\n"
        "    - {kind: linear}\n")
    cfg = load_config(str(p))
    assert cfg.input_shape() == (1, 28, 28)
    assert cfg.n_classes() == 10


def test_empty_file_reports_missing_required(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    with pytest.raises(ConfigError, match="required"):
        load_config(str(p))
