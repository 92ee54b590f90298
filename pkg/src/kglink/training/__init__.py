"""Losses, SGD training, ranking evaluation and model selection."""
from .losses import log_loss, loss_value, margin_loss, squared_loss
from .metrics import auc_pr, auc_roc, hits_at, mrr, pr_curve
from .ranking import RankingReport, as_scorer, evaluate, labeled_eval_set, rank_entities
from .selection import cross_validate, fold_assignment
from .sgd import TrainConfig, TrainingDiverged, apply_step, sgd_train, touched_keys

__all__ = [
    "RankingReport", "TrainConfig", "TrainingDiverged", "apply_step", "as_scorer", "auc_pr",
    "auc_roc", "cross_validate", "evaluate", "fold_assignment", "hits_at", "labeled_eval_set",
    "log_loss", "loss_value", "margin_loss", "mrr", "pr_curve", "rank_entities", "sgd_train",
    "squared_loss", "touched_keys",
]
