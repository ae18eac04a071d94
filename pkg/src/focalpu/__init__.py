"""Positive-unlabeled learning with focal-loss non-negative risk estimation."""

from .losses import FocalParams, LossKind, focal_grad, focal_pointwise, parse_loss, sigmoid_loss
from .metrics import all_metrics, pr_auc, r_precision, roc_auc
from .model import ScorerParams, TrainConfig, forward, grad_check, init_scorer, load_snapshot, save_snapshot, train
from .pudata import (
    ClassPrior,
    CsvSchema,
    LabeledDataset,
    Mechanism,
    PUView,
    label,
    load_csv,
    standardize,
    synth_gaussian,
    train_test_split,
)
from .risk import Estimator, evaluate, ifpu_risk, nnpu_risk, pn_risk, upu_risk

__version__ = "0.1.0"

__all__ = [
    "FocalParams", "LossKind", "focal_grad", "focal_pointwise", "parse_loss", "sigmoid_loss",
    "all_metrics", "pr_auc", "r_precision", "roc_auc",
    "ScorerParams", "TrainConfig", "forward", "grad_check", "init_scorer", "load_snapshot", "save_snapshot", "train",
    "ClassPrior", "CsvSchema", "LabeledDataset", "Mechanism", "PUView", "label", "load_csv", "standardize",
    "synth_gaussian", "train_test_split",
    "Estimator", "evaluate", "ifpu_risk", "nnpu_risk", "pn_risk", "upu_risk",
]
