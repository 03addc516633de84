"""Experiment pipeline: dataset loaders, model serialization, YAML
configuration, stage runner with manifests and caching, and the CLI."""

from .config import ExperimentConfig, load_config
from .datasets import Dataset, load_dataset, synthetic_shapes
from .model_io import (ModelArtifact, load_model, load_model_file,
                       save_model, save_model_file)
from .stages import (STAGE_ORDER, STAGE_PARENTS, RunResult, StageRunner,
                     manifest_fingerprint)

__all__ = [
    "ExperimentConfig", "load_config",
    "Dataset", "load_dataset", "synthetic_shapes",
    "ModelArtifact", "load_model", "load_model_file",
    "save_model", "save_model_file",
    "STAGE_ORDER", "STAGE_PARENTS", "RunResult", "StageRunner",
    "manifest_fingerprint",
]
