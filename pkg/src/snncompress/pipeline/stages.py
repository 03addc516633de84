"""Stage-by-stage experiment runner.

Nine stages run in a fixed dependency order:

    train-ann -> convert -> train-snn -> prune-spatial -> prune-temporal
    -> quantize -> analyze / eval-noise -> report

Each stage writes its artifacts plus a JSON manifest into
<out>/<stage>/. The manifest records the hash of the config sections
the stage reads, the fingerprints of its parent manifests, the sha256
of every artifact, the metrics, and the wall time. A stage is skipped
as cached when its manifest, config hash, parent fingerprints, and
artifact checksums all still match; everything except wall time is
deterministic for a fixed config, so two runs of the same experiment
produce byte-identical artifacts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import tempfile
import time

import numpy as np
import yaml

from ..analysis import energy_report, noise_robustness, spike_stats
from ..errors import DependencyError
from ..network import init_weights
from ..quantize import quantize_network
from ..simulate import evaluate, run_batched
from ..spatial import prune_spatial
from ..temporal import TemporalPruneConfig, temporal_prune
from ..training import (ann_evaluate, convert_to_snn, train_ann, train_snn)
from .config import ExperimentConfig
from .datasets import Dataset, load_dataset
from .model_io import ModelArtifact, layer_table, load_model_file, save_model_file

STAGE_ORDER = ("train-ann", "convert", "train-snn", "prune-spatial",
               "prune-temporal", "quantize", "analyze", "eval-noise",
               "report")

STAGE_PARENTS = {
    "train-ann": (),
    "convert": ("train-ann",),
    "train-snn": ("convert",),
    "prune-spatial": ("train-snn",),
    "prune-temporal": ("prune-spatial",),
    "quantize": ("prune-temporal",),
    "analyze": ("train-ann", "quantize"),
    "eval-noise": ("quantize",),
    "report": ("train-ann", "convert", "train-snn", "prune-spatial",
               "prune-temporal", "quantize", "analyze", "eval-noise"),
}

# Config sections each stage reads directly. Upstream changes propagate
# through parent fingerprints, so a stage only hashes its own inputs.
STAGE_SECTIONS: dict[str, tuple[str, ...] | None] = {
    "train-ann": ("seed", "dataset", "architecture", "ann"),
    "convert": ("seed", "dataset", "threshold", "timesteps"),
    "train-snn": ("seed", "dataset", "snn", "timesteps"),
    "prune-spatial": ("seed", "dataset", "ann", "snn", "threshold",
                      "timesteps", "spatial"),
    "prune-temporal": ("seed", "dataset", "snn", "temporal", "timesteps"),
    "quantize": ("seed", "quantize"),
    "analyze": ("seed", "dataset", "analysis"),
    "eval-noise": ("seed", "dataset", "analysis"),
    "report": None,  # the full config
}

MODEL_FILE = "model.snnc"


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def manifest_fingerprint(manifest: dict) -> str:
    """Stable digest of a manifest with timing stripped."""
    trimmed = {k: v for k, v in manifest.items() if k != "wall_time_s"}
    return hashlib.sha256(json.dumps(
        trimmed, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _history_csv(history: list[dict]) -> str:
    cols = ("epoch", "lr", "train_loss", "train_acc", "val_acc")
    lines = [",".join(cols)]
    lines += [",".join(str(row[c]) for c in cols) for row in history]
    return "\n".join(lines) + "\n"


@dataclasses.dataclass(frozen=True)
class RunResult:
    stage: str
    status: str  # "ran" or "cached"
    manifest: dict
    directory: str


class StageRunner:
    """Executes pipeline stages against one config and output directory."""

    def __init__(self, config: ExperimentConfig, out_dir: str):
        self.config = config
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        _write_text_atomic(os.path.join(out_dir, "config.yaml"),
                           config.to_yaml())
        self._dataset: Dataset | None = None

    # -- plumbing -----------------------------------------------------------

    def dataset(self) -> Dataset:
        if self._dataset is None:
            self._dataset = load_dataset(self.config.dataset_spec())
        return self._dataset

    def stage_dir(self, stage: str) -> str:
        return os.path.join(self.out_dir, stage)

    def _manifest_path(self, stage: str) -> str:
        return os.path.join(self.stage_dir(stage), "manifest.json")

    def read_manifest(self, stage: str) -> dict | None:
        path = self._manifest_path(stage)
        if not os.path.exists(path):
            return None
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)

    def config_hash_for(self, stage: str) -> str:
        return self.config.config_hash(STAGE_SECTIONS[stage])

    def _artifacts_intact(self, stage: str, manifest: dict) -> bool:
        for entry in manifest.get("artifacts", {}).values():
            path = os.path.join(self.stage_dir(stage), entry["file"])
            if not os.path.exists(path) or _sha256_file(path) != entry["sha256"]:
                return False
        return True

    def is_cached(self, stage: str) -> bool:
        manifest = self.read_manifest(stage)
        if manifest is None:
            return False
        if manifest.get("config_hash") != self.config_hash_for(stage):
            return False
        for parent in STAGE_PARENTS[stage]:
            pm = self.read_manifest(parent)
            if pm is None:
                return False
            if manifest.get("parents", {}).get(parent) != manifest_fingerprint(pm):
                return False
        return self._artifacts_intact(stage, manifest)

    def _require(self, stage: str, parent: str) -> dict:
        manifest = self.read_manifest(parent)
        if manifest is None or not self._artifacts_intact(parent, manifest):
            raise DependencyError(
                f"stage {stage!r} needs the output of {parent!r}; "
                f"run {parent!r} first", required_stage=parent)
        return manifest

    def _load_model(self, stage: str) -> ModelArtifact:
        return load_model_file(os.path.join(self.stage_dir(stage), MODEL_FILE))

    def run(self, stage: str, force: bool = False) -> RunResult:
        if stage not in STAGE_ORDER:
            raise ValueError(f"unknown stage {stage!r}; expected one of "
                             f"{', '.join(STAGE_ORDER)}")
        if not force and self.is_cached(stage):
            manifest = self.read_manifest(stage)
            assert manifest is not None
            return RunResult(stage, "cached", manifest, self.stage_dir(stage))
        parents = {p: manifest_fingerprint(self._require(stage, p))
                   for p in STAGE_PARENTS[stage]}
        os.makedirs(self.stage_dir(stage), exist_ok=True)
        start = time.perf_counter()
        artifacts, metrics = _STAGE_FUNCS[stage](self)
        wall = time.perf_counter() - start
        manifest = {
            "stage": stage,
            "config_hash": self.config_hash_for(stage),
            "seed": self.config.seed,
            "parents": parents,
            "artifacts": {
                name: {"file": fname,
                       "sha256": _sha256_file(
                           os.path.join(self.stage_dir(stage), fname))}
                for name, fname in artifacts.items()},
            "metrics": metrics,
            "wall_time_s": wall,
        }
        _write_text_atomic(self._manifest_path(stage), _dump_json(manifest))
        return RunResult(stage, "ran", manifest, self.stage_dir(stage))

    def run_all(self, force: bool = False) -> list[RunResult]:
        return [self.run(stage, force=force) for stage in STAGE_ORDER]

    # -- stage bodies --------------------------------------------------------

    def _save(self, stage: str, fname: str, text: str) -> None:
        _write_text_atomic(os.path.join(self.stage_dir(stage), fname), text)

    def _stage_train_ann(self):
        ds = self.dataset()
        net = init_weights(self.config.network_config(), seed=self.config.seed)
        history = train_ann(net, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
                            self.config.ann_config())
        save_model_file(ModelArtifact(net, timesteps=0),
                        os.path.join(self.stage_dir("train-ann"), MODEL_FILE))
        self._save("train-ann", "train_curve.csv", _history_csv(history))
        metrics = {
            "epochs": len(history),
            "val_acc": ann_evaluate(net, ds.val_x, ds.val_y),
            "test_acc": ann_evaluate(net, ds.test_x, ds.test_y),
            "n_params": net.n_params(),
        }
        return ({"model": MODEL_FILE, "train_curve": "train_curve.csv"},
                metrics)

    def _stage_convert(self):
        ds = self.dataset()
        parent = self._load_model("train-ann")
        calib = ds.train_x[:self.config.section("threshold")["calib_samples"]]
        snn, ts = convert_to_snn(
            parent.network, calib, self.config.timesteps,
            percentile=self.config.section("threshold")["percentile"],
            seed=self.config.seed)
        save_model_file(ModelArtifact(snn, timesteps=self.config.timesteps),
                        os.path.join(self.stage_dir("convert"), MODEL_FILE))
        metrics = {
            "thresholds": list(ts.values),
            "percentile": ts.percentile,
            "val_acc": evaluate(snn, ds.val_x, ds.val_y, self.config.timesteps,
                                seed=self.config.seed),
        }
        return ({"model": MODEL_FILE}, metrics)

    def _stage_train_snn(self):
        ds = self.dataset()
        art = self._load_model("convert")
        net = art.network
        history = train_snn(net, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
                            self.config.timesteps, self.config.snn_config())
        save_model_file(ModelArtifact(net, timesteps=self.config.timesteps),
                        os.path.join(self.stage_dir("train-snn"), MODEL_FILE))
        self._save("train-snn", "train_curve.csv", _history_csv(history))
        metrics = {
            "epochs": len(history),
            "val_acc": evaluate(net, ds.val_x, ds.val_y, self.config.timesteps,
                                seed=self.config.seed),
            "test_acc": evaluate(net, ds.test_x, ds.test_y,
                                 self.config.timesteps, seed=self.config.seed),
            "n_params": net.n_params(),
        }
        return ({"model": MODEL_FILE, "train_curve": "train_curve.csv"},
                metrics)

    def _stage_prune_spatial(self):
        ds = self.dataset()
        snn = self._load_model("train-snn").network
        sp = self.config.section("spatial")
        pruned_cfg, report = prune_spatial(
            snn, ds.train_x, self.config.timesteps, seed=self.config.seed,
            threshold=sp["threshold"], center=sp["center"],
            max_samples=sp["max_samples"])
        # The slimmer architecture is retrained from scratch through the
        # same hybrid path: analog training, threshold balancing, then
        # spike-domain fine-tuning.
        net = init_weights(pruned_cfg, seed=self.config.seed)
        ann_hist = train_ann(net, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
                             self.config.ann_config())
        calib = ds.train_x[:self.config.section("threshold")["calib_samples"]]
        snn2, _ = convert_to_snn(
            net, calib, self.config.timesteps,
            percentile=self.config.section("threshold")["percentile"],
            seed=self.config.seed)
        snn_hist = train_snn(snn2, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
                             self.config.timesteps, self.config.snn_config())
        stage = "prune-spatial"
        save_model_file(ModelArtifact(snn2, timesteps=self.config.timesteps),
                        os.path.join(self.stage_dir(stage), MODEL_FILE))
        self._save(stage, "prune_report.json", _dump_json(report.as_dict()))
        self._save(stage, "architecture.yaml", yaml.safe_dump(
            {"leak": pruned_cfg.leak_lambda, "layers": layer_table(pruned_cfg)},
            sort_keys=True, default_flow_style=False))
        self._save(stage, "ann_curve.csv", _history_csv(ann_hist))
        self._save(stage, "snn_curve.csv", _history_csv(snn_hist))
        metrics = {
            "parent_params": report.parent_params,
            "pruned_params": report.pruned_params,
            "param_ratio": report.param_ratio,
            "significant_dims": [list(r) for r in report.rows],
            "removed_layers": list(report.removed_layers),
            "val_acc": evaluate(snn2, ds.val_x, ds.val_y, self.config.timesteps,
                                seed=self.config.seed),
            "test_acc": evaluate(snn2, ds.test_x, ds.test_y,
                                 self.config.timesteps, seed=self.config.seed),
        }
        return ({"model": MODEL_FILE, "prune_report": "prune_report.json",
                 "architecture": "architecture.yaml",
                 "ann_curve": "ann_curve.csv", "snn_curve": "snn_curve.csv"},
                metrics)

    def _stage_prune_temporal(self):
        ds = self.dataset()
        art = self._load_model("prune-spatial")
        net = art.network
        t = self.config.section("temporal")
        if t["a_min"] is not None:
            a_min = t["a_min"]
        else:
            baseline = evaluate(net, ds.val_x, ds.val_y, self.config.timesteps,
                                seed=self.config.seed)
            a_min = baseline - t["a_min_drop"]
        a_min = min(max(a_min, 1e-9), 1 - 1e-9)
        cfg = TemporalPruneConfig(t_start=self.config.timesteps, a_min=a_min,
                                  v=t["v"], e=t["e"])
        res = temporal_prune(net, ds.train_x, ds.train_y, ds.val_x, ds.val_y,
                             cfg, self.config.snn_config())
        stage = "prune-temporal"
        save_model_file(ModelArtifact(res.network, timesteps=res.final_t),
                        os.path.join(self.stage_dir(stage), MODEL_FILE))
        self._save(stage, "latency_curve.csv", res.curve.to_csv())
        metrics = {
            "status": res.status,
            "a_min": a_min,
            "t_start": self.config.timesteps,
            "final_t": res.final_t,
            "start_acc": res.start_acc,
            "start_asci": res.start_asci,
            "val_acc": evaluate(res.network, ds.val_x, ds.val_y, res.final_t,
                                seed=self.config.seed),
            "test_acc": evaluate(res.network, ds.test_x, ds.test_y,
                                 res.final_t, seed=self.config.seed),
        }
        return ({"model": MODEL_FILE, "latency_curve": "latency_curve.csv"},
                metrics)

    def _stage_quantize(self):
        ds = self.dataset()
        art = self._load_model("prune-temporal")
        bits = self.config.section("quantize")["bits"]
        q = quantize_network(art.network, bits, seed=self.config.seed)
        stage = "quantize"
        save_model_file(
            ModelArtifact(q.network, timesteps=art.timesteps,
                          codebooks=q.codebooks),
            os.path.join(self.stage_dir(stage), MODEL_FILE))
        self._save(stage, "compression.json", _dump_json({
            "bits": bits,
            "layers": [s.as_dict() for s in q.stats],
            "overall_rate": q.overall_rate,
        }))
        metrics = {
            "bits": bits,
            "overall_rate": q.overall_rate,
            "timesteps": art.timesteps,
            "val_acc": evaluate(q.network, ds.val_x, ds.val_y, art.timesteps,
                                seed=self.config.seed),
            "test_acc": evaluate(q.network, ds.test_x, ds.test_y,
                                 art.timesteps, seed=self.config.seed),
        }
        return ({"model": MODEL_FILE, "compression": "compression.json"},
                metrics)

    def _eval_subset(self) -> tuple[np.ndarray, np.ndarray]:
        ds = self.dataset()
        k = self.config.section("analysis")["eval_samples"]
        if k is None:
            return ds.test_x, ds.test_y
        return ds.test_x[:k], ds.test_y[:k]

    def _stage_analyze(self):
        x, y = self._eval_subset()
        ann_art = self._load_model("train-ann")
        art = self._load_model("quantize")
        potentials, record = run_batched(art.network, x, art.timesteps,
                                         seed=self.config.seed)
        acc = float(np.mean(np.argmax(potentials, axis=1) == y))
        stats = spike_stats(record)
        er = energy_report(ann_art.network.config, art.network.config, record)
        self._save("analyze", "analysis.json", _dump_json({
            "timesteps": art.timesteps,
            "accuracy": acc,
            "asci": stats.asci,
            "asci_hidden": stats.asci_hidden,
            "input_rate": stats.input_rate,
            "spike_rates": {str(i): r for i, r in stats.rates},
            "energy": er.as_dict(),
        }))
        metrics = {
            "accuracy": acc,
            "asci": stats.asci,
            "alpha": er.alpha,
            "ann_total_ops": er.ann_total,
            "snn_total_ops": er.snn_total,
            "timesteps": art.timesteps,
        }
        return ({"analysis": "analysis.json"}, metrics)

    def _stage_eval_noise(self):
        x, y = self._eval_subset()
        art = self._load_model("quantize")
        sigmas = self.config.section("analysis")["sigmas"]
        curve = noise_robustness(art.network, x, y, sigmas, art.timesteps,
                                 seed=self.config.seed)
        self._save("eval-noise", "noise_curve.csv", curve.to_csv())
        metrics = {
            "clean_acc": curve.accuracy_at(0.0),
            "entries": [[s, a] for s, a in curve.entries],
        }
        return ({"noise_curve": "noise_curve.csv"}, metrics)

    def _stage_report(self):
        stages = {}
        for parent in STAGE_PARENTS["report"]:
            m = self.read_manifest(parent)
            assert m is not None  # _require ran before the stage body
            stages[parent] = {
                "config_hash": m["config_hash"],
                "fingerprint": manifest_fingerprint(m),
                "metrics": m["metrics"],
                "artifacts": m["artifacts"],
            }
        summary = {
            "seed": self.config.seed,
            "timesteps": self.config.timesteps,
            "ann_val_acc": stages["train-ann"]["metrics"]["val_acc"],
            "snn_val_acc": stages["train-snn"]["metrics"]["val_acc"],
            "pruned_val_acc": stages["prune-spatial"]["metrics"]["val_acc"],
            "parent_params": stages["prune-spatial"]["metrics"]["parent_params"],
            "pruned_params": stages["prune-spatial"]["metrics"]["pruned_params"],
            "final_timesteps": stages["prune-temporal"]["metrics"]["final_t"],
            "final_val_acc": stages["quantize"]["metrics"]["val_acc"],
            "final_test_acc": stages["quantize"]["metrics"]["test_acc"],
            "compression_rate": stages["quantize"]["metrics"]["overall_rate"],
            "asci": stages["analyze"]["metrics"]["asci"],
            "alpha": stages["analyze"]["metrics"]["alpha"],
        }
        self._save("report", "report.json", _dump_json({
            "config_hash": self.config.config_hash(),
            "summary": summary,
            "stages": stages,
        }))
        return ({"report": "report.json"}, summary)


_STAGE_FUNCS = {
    "train-ann": StageRunner._stage_train_ann,
    "convert": StageRunner._stage_convert,
    "train-snn": StageRunner._stage_train_snn,
    "prune-spatial": StageRunner._stage_prune_spatial,
    "prune-temporal": StageRunner._stage_prune_temporal,
    "quantize": StageRunner._stage_quantize,
    "analyze": StageRunner._stage_analyze,
    "eval-noise": StageRunner._stage_eval_noise,
    "report": StageRunner._stage_report,
}
