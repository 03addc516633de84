"""Training paths: analog pre-training, threshold balancing, and
surrogate-gradient fine-tuning of the spiking network."""

from .ann import AnnTrainConfig, ann_evaluate, ann_forward, train_ann
from .bptt import (DEFAULT_GAMMA, SnnTrainConfig, make_optimizer,
                   snn_gradients, surrogate_grad, train_snn)
from .convert import (DEFAULT_PERCENTILE, ThresholdSet, balance_thresholds,
                      convert_to_snn)
from .optim import Adam, SGDMomentum

__all__ = [
    "AnnTrainConfig", "ann_evaluate", "ann_forward", "train_ann",
    "DEFAULT_GAMMA", "SnnTrainConfig", "make_optimizer", "snn_gradients",
    "surrogate_grad", "train_snn",
    "DEFAULT_PERCENTILE", "ThresholdSet", "balance_thresholds", "convert_to_snn",
    "Adam", "SGDMomentum",
]
