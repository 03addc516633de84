"""Exception types shared across the package.

Plain invalid arguments raise ValueError; the classes here mark failure
modes that callers are expected to branch on (CLI exit codes, pipeline
recovery, test assertions).
"""

from __future__ import annotations


class SNNCompressError(Exception):
    """Base class for package-specific failures."""


class ConfigError(SNNCompressError):
    """Experiment configuration is malformed: unknown key, bad type,
    missing required field, or a referenced path that does not exist."""


class FormatError(SNNCompressError):
    """A serialized artifact or dataset file is malformed. The message
    names the offending file/section and, for binary parsers, the byte
    offset where parsing failed."""


class DependencyError(SNNCompressError):
    """A pipeline stage was asked to run before the stage it consumes.

    `required_stage` names the missing prerequisite.
    """

    def __init__(self, message: str, required_stage: str = ""):
        super().__init__(message)
        self.required_stage = required_stage


class TrainingError(SNNCompressError):
    """Training diverged (non-finite loss or gradients).

    `epoch` is the zero-based epoch in which divergence was detected.
    """

    def __init__(self, message: str, epoch: int = -1):
        super().__init__(message)
        self.epoch = epoch


class DegenerateInputError(SNNCompressError):
    """A statistic is undefined on the given input, e.g. principal
    components of an all-zero activation matrix."""
