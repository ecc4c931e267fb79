"""Losses, optimizers, metrics and the training loop."""

from .losses import last_step_ce, neuronio_loss
from .loop import TrainConfig, TrainResult, evaluate, load_checkpoint, predict, train
from .metrics import MetricsReport, accuracy, auc, rmse, tpr_at_fpr
from .models import ModelConfig, build_model
from .optim import adam_step, adamax_step, cosine_lr

__all__ = [
    "MetricsReport", "ModelConfig", "TrainConfig", "TrainResult", "accuracy", "adam_step",
    "adamax_step", "auc", "build_model", "cosine_lr", "evaluate", "last_step_ce",
    "load_checkpoint", "neuronio_loss", "predict", "rmse", "tpr_at_fpr", "train",
]
