"""CLI tests: exit codes, stage selection, seed override, cached
reruns, and the thread-pinning re-exec guard."""

import json
import os

import numpy as np
import pytest
import yaml

from snncompress.pipeline.cli import _apply_threads, main

RAW = {
    "seed": 0,
    "timesteps": 4,
    "dataset": {"name": "synthetic", "n_train": 80, "n_test": 20,
                "n_classes": 2, "size": 8},
    "architecture": {"layers": [
        {"kind": "conv", "out_channels": 3},
        {"kind": "avgpool"},
        {"kind": "linear"},
    ]},
    "ann": {"epochs": 1, "batch_size": 32, "lr": 0.05},
    "snn": {"epochs": 1, "batch_size": 32, "lr": 0.0005},
    "threshold": {"calib_samples": 32},
    "spatial": {"max_samples": 32},
    "temporal": {"v": 2, "e": 1},
    "quantize": {"bits": 3},
    "analysis": {"sigmas": [0.0, 0.3], "eval_samples": 12},
}


def write_config(tmp_path, raw=None, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw if raw is not None else RAW))
    return str(path)


def test_full_run_and_cached_rerun(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "run")
    assert main(["--config", cfg, "--out", out]) == 0
    first = capsys.readouterr().out
    assert first.count("[ran]") == 9
    assert os.path.exists(os.path.join(out, "report", "report.json"))

    assert main(["--config", cfg, "--out", out]) == 0
    second = capsys.readouterr().out
    assert second.count("[cached]") == 9


def test_single_stage(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "run")
    assert main(["--config", cfg, "--stage", "train-ann", "--out", out]) == 0
    assert "[ran] train-ann" in capsys.readouterr().out
    assert os.path.exists(os.path.join(out, "train-ann", "model.snnc"))
    assert not os.path.exists(os.path.join(out, "convert"))


def test_dependency_error_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "run")
    assert main(["--config", cfg, "--stage", "analyze", "--out", out]) == 3
    assert "dependency error" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    raw = json.loads(json.dumps(RAW))
    raw["quantize"] = {"bitz": 3}
    cfg = write_config(tmp_path, raw)
    assert main(["--config", cfg, "--out", str(tmp_path / "r")]) == 2
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_exit_code(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "nope.yaml"),
                 "--out", str(tmp_path / "r")]) == 2
    assert "not found" in capsys.readouterr().err


def test_training_failure_exit_code(tmp_path, capsys):
    raw = json.loads(json.dumps(RAW))
    raw["ann"] = {"epochs": 2, "batch_size": 16, "lr": 1e12}
    cfg = write_config(tmp_path, raw)
    with np.errstate(over="ignore", invalid="ignore"):
        code = main(["--config", cfg, "--stage", "train-ann",
                     "--out", str(tmp_path / "r")])
    assert code == 4
    assert "training failed" in capsys.readouterr().err


def test_seed_override(tmp_path):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "run")
    assert main(["--config", cfg, "--stage", "train-ann", "--seed", "9",
                 "--out", out]) == 0
    manifest = json.load(open(os.path.join(out, "train-ann", "manifest.json")))
    assert manifest["seed"] == 9


def test_invalid_stage_name(tmp_path, capsys):
    cfg = write_config(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(["--config", cfg, "--stage", "train", "--out", str(tmp_path / "r")])
    assert exc.value.code == 2
    assert "invalid choice" in capsys.readouterr().err


def test_negative_threads_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["--config", cfg, "--threads", "0",
                 "--out", str(tmp_path / "r")]) == 2


def test_apply_threads_no_reexec_when_env_matches(monkeypatch):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        monkeypatch.setenv(var, "2")
    _apply_threads(2, [])  # must not exec


def test_apply_threads_guard_stops_second_exec(monkeypatch):
    monkeypatch.setenv("_SNNC_REEXEC", "1")
    monkeypatch.delenv("OMP_NUM_THREADS", raising=False)
    _apply_threads(3, [])  # guard set: must not exec


def test_threads_flag_runs_stage(tmp_path, monkeypatch, capsys):
    """With the re-exec guard pre-set, --threads proceeds in-process."""
    monkeypatch.setenv("_SNNC_REEXEC", "1")
    cfg = write_config(tmp_path)
    out = str(tmp_path / "run")
    assert main(["--config", cfg, "--stage", "train-ann", "--threads", "1",
                 "--out", out]) == 0
    assert "[ran] train-ann" in capsys.readouterr().out
