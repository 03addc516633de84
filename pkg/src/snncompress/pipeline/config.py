"""Experiment configuration.

A single YAML file describes the whole experiment: dataset, architecture,
both training phases, threshold balancing, both pruning passes,
quantization, and evaluation. Every key has a default except
dataset.name and architecture.layers; unknown keys anywhere are hard
errors so a typo cannot silently fall back to a default.

The resolved (fully defaulted) form is canonical: it hashes stably and
can be re-emitted as YAML for the run directory.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os

import yaml

from ..errors import ConfigError
from ..network import NetworkConfig, build_config
from ..lif import DEFAULT_LEAK
from ..training import AnnTrainConfig, SnnTrainConfig
from ..training.convert import DEFAULT_PERCENTILE

_REQUIRED = object()

# Schema: section -> key -> (coercer, default). A default of _REQUIRED
# makes the key mandatory.


def _as_int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    return v


def _as_float(v, path):
    if isinstance(v, bool):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            pass
    raise ConfigError(f"{path}: expected a number, got {v!r}")


def _as_bool(v, path):
    if not isinstance(v, bool):
        raise ConfigError(f"{path}: expected true/false, got {v!r}")
    return v


def _as_str(v, path):
    if not isinstance(v, str):
        raise ConfigError(f"{path}: expected a string, got {v!r}")
    return v


def _as_opt_str(v, path):
    return None if v is None else _as_str(v, path)


def _as_opt_int(v, path):
    return None if v is None else _as_int(v, path)


def _as_opt_float(v, path):
    return None if v is None else _as_float(v, path)


def _as_sigma_list(v, path):
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(f"{path}: expected a non-empty list of numbers")
    out = [_as_float(x, f"{path}[{i}]") for i, x in enumerate(v)]
    if any(s < 0 for s in out):
        raise ConfigError(f"{path}: noise levels must be non-negative")
    if 0.0 not in out:
        raise ConfigError(f"{path}: must include 0.0 (the clean baseline)")
    return out


def _as_layer_list(v, path):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{path}: expected a non-empty list of layer mappings")
    out = []
    for i, d in enumerate(v):
        if not isinstance(d, dict) or "kind" not in d:
            raise ConfigError(f"{path}[{i}]: each layer needs at least a kind")
        out.append({str(k): d[k] for k in d})
    return out


_SCHEMA: dict = {
    "seed": (_as_int, 0),
    "timesteps": (_as_int, 20),
    "dataset": {
        "name": (_as_str, _REQUIRED),
        "path": (_as_opt_str, None),
        "val_fraction": (_as_float, 0.1),
        "n_train": (_as_opt_int, None),
        "n_test": (_as_opt_int, None),
        "n_classes": (_as_opt_int, None),
        "size": (_as_opt_int, None),
        "noise": (_as_opt_float, None),
        "jitter": (_as_opt_int, None),
    },
    "architecture": {
        "leak": (_as_float, DEFAULT_LEAK),
        "layers": (_as_layer_list, _REQUIRED),
    },
    "ann": {
        "epochs": (_as_int, 10),
        "batch_size": (_as_int, 64),
        "lr": (_as_float, 0.05),
        "momentum": (_as_float, 0.9),
        "weight_decay": (_as_float, 1e-4),
        "lr_drop_every": (_as_opt_int, None),
        "lr_drop_factor": (_as_float, 10.0),
        "augment": (_as_bool, False),
    },
    "snn": {
        "epochs": (_as_int, 5),
        "batch_size": (_as_int, 64),
        "lr": (_as_float, 1e-4),
        "weight_decay": (_as_float, 5e-4),
        "lr_halve_every": (_as_int, 5),
    },
    "threshold": {
        "percentile": (_as_float, DEFAULT_PERCENTILE),
        "calib_samples": (_as_int, 512),
    },
    "spatial": {
        "threshold": (_as_float, 0.999),
        "center": (_as_bool, True),
        "max_samples": (_as_int, 256),
    },
    "temporal": {
        "v": (_as_int, 1),
        "e": (_as_int, 1),
        "a_min": (_as_opt_float, None),
        "a_min_drop": (_as_float, 0.03),
    },
    "quantize": {
        "bits": (_as_int, 5),
    },
    "analysis": {
        "sigmas": (_as_sigma_list, [0.0, 0.05, 0.1, 0.2, 0.4]),
        "eval_samples": (_as_opt_int, None),
    },
}

# Input shape / class count per file-backed dataset (synthetic derives
# its own from its config). Used to dry-run the architecture at load time.
_FIXED_DATASETS = {
    "mnist": ((1, 28, 28), 10),
    "idx-digits": ((1, 28, 28), 10),
    "cifar10": ((3, 32, 32), 10),
}


def _resolve(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(raw) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out: dict = {}
    for key, schema in _SCHEMA.items():
        if isinstance(schema, dict):
            section = raw.get(key, {})
            if section is None:
                section = {}
            if not isinstance(section, dict):
                raise ConfigError(f"{key}: expected a mapping")
            bad = set(section) - set(schema)
            if bad:
                raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
            resolved = {}
            for k, (coerce, default) in schema.items():
                if k in section:
                    resolved[k] = coerce(section[k], f"{key}.{k}")
                elif default is _REQUIRED:
                    raise ConfigError(f"{key}.{k} is required")
                else:
                    resolved[k] = default
            out[key] = resolved
        else:
            coerce, default = schema
            out[key] = coerce(raw[key], key) if key in raw else default
    return out


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully defaulted experiment description."""

    resolved: dict

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str = ".") -> "ExperimentConfig":
        resolved = _resolve(raw)
        path = resolved["dataset"]["path"]
        if path is not None and not os.path.isabs(path):
            # Freeze the path against the config's own directory so later
            # stages are independent of the process working directory.
            resolved["dataset"]["path"] = os.path.abspath(
                os.path.join(base_dir, path))
        cfg = cls(resolved)
        cfg._check()
        return cfg

    def _check(self) -> None:
        ds = self.resolved["dataset"]
        if ds["name"] not in _FIXED_DATASETS and ds["name"] != "synthetic":
            raise ConfigError(f"unknown dataset name {ds['name']!r}")
        path = ds["path"]
        if path is not None and not os.path.isdir(path):
            raise ConfigError(f"dataset.path does not exist: {path}")
        if self.resolved["timesteps"] < 2:
            raise ConfigError("timesteps must be at least 2")
        bits = self.resolved["quantize"]["bits"]
        if not 1 <= bits <= 32:
            raise ConfigError(f"quantize.bits must lie in [1, 32], got {bits}")
        t = self.resolved["temporal"]
        if t["v"] < 1 or t["e"] < 1:
            raise ConfigError("temporal.v and temporal.e must be at least 1")
        if t["v"] >= self.resolved["timesteps"]:
            raise ConfigError("temporal.v must be smaller than timesteps")
        if not 0 < t["a_min_drop"] < 1:
            raise ConfigError("temporal.a_min_drop must lie in (0, 1)")
        if t["a_min"] is not None and not 0 < t["a_min"] < 1:
            raise ConfigError("temporal.a_min must lie in (0, 1)")
        sp = self.resolved["spatial"]
        if not 0 < sp["threshold"] <= 1:
            raise ConfigError("spatial.threshold must lie in (0, 1]")
        # Dry-run the architecture against the dataset's static shape so
        # a bad layer stack fails at load, not mid-pipeline.
        try:
            self.network_config()
        except (ValueError, TypeError) as e:
            raise ConfigError(f"architecture: {e}") from e

    # -- dataset ----------------------------------------------------------

    def dataset_spec(self) -> dict:
        ds = self.resolved["dataset"]
        spec = {"name": ds["name"], "seed": self.seed,
                "val_fraction": ds["val_fraction"]}
        if ds["path"] is not None:
            spec["path"] = ds["path"]
        if ds["name"] == "synthetic":
            for k in ("n_train", "n_test", "n_classes", "size", "noise", "jitter"):
                if ds[k] is not None:
                    spec[k] = ds[k]
        return spec

    def input_shape(self) -> tuple[int, int, int]:
        ds = self.resolved["dataset"]
        if ds["name"] in _FIXED_DATASETS:
            return _FIXED_DATASETS[ds["name"]][0]
        size = ds["size"] if ds["size"] is not None else 16
        return (1, size, size)

    def n_classes(self) -> int:
        ds = self.resolved["dataset"]
        if ds["name"] in _FIXED_DATASETS:
            return _FIXED_DATASETS[ds["name"]][1]
        return ds["n_classes"] if ds["n_classes"] is not None else 4

    # -- derived stage configs ---------------------------------------------

    @property
    def seed(self) -> int:
        return self.resolved["seed"]

    @property
    def timesteps(self) -> int:
        return self.resolved["timesteps"]

    def network_config(self, layer_defs: list | None = None) -> NetworkConfig:
        arch = self.resolved["architecture"]
        return build_config(self.input_shape(), self.n_classes(),
                            layer_defs if layer_defs is not None
                            else [dict(d) for d in arch["layers"]],
                            leak_lambda=arch["leak"])

    def ann_config(self) -> AnnTrainConfig:
        a = self.resolved["ann"]
        return AnnTrainConfig(epochs=a["epochs"], batch_size=a["batch_size"],
                              lr=a["lr"], momentum=a["momentum"],
                              weight_decay=a["weight_decay"],
                              lr_drop_every=a["lr_drop_every"],
                              lr_drop_factor=a["lr_drop_factor"],
                              augment=a["augment"], seed=self.seed)

    def snn_config(self) -> SnnTrainConfig:
        s = self.resolved["snn"]
        return SnnTrainConfig(epochs=s["epochs"], batch_size=s["batch_size"],
                              lr=s["lr"], weight_decay=s["weight_decay"],
                              lr_halve_every=s["lr_halve_every"],
                              seed=self.seed)

    def section(self, name: str) -> dict:
        return json.loads(json.dumps(self.resolved[name]))

    # -- canonical forms ----------------------------------------------------

    def canonical_json(self, sections: tuple[str, ...] | None = None) -> str:
        d = self.resolved if sections is None else {
            k: self.resolved[k] for k in sorted(sections)}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def config_hash(self, sections: tuple[str, ...] | None = None) -> str:
        return hashlib.sha256(self.canonical_json(sections).encode()).hexdigest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(json.loads(self.canonical_json()),
                              sort_keys=True, default_flow_style=False)

    def __eq__(self, other):
        return (isinstance(other, ExperimentConfig)
                and self.resolved == other.resolved)

    def __hash__(self):
        return hash(self.canonical_json())


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a YAML experiment file. Relative dataset paths
    resolve against the config file's directory."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML: {e}") from e
    if raw is None:
        raw = {}
    return ExperimentConfig.from_dict(raw, base_dir=os.path.dirname(
        os.path.abspath(path)))
