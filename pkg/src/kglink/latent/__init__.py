"""Latent feature models and their fitting routines."""
from .models import (
    KINDS,
    LatentModel,
    ModelConfig,
    dense_gradient,
    gradient,
    init_model,
    loss_and_gradient,
    nearest_relations,
    ntn_from_rescal,
    param_count,
    param_shapes,
    score,
    score_gradient,
    score_many,
    transe_rewritten_score,
)
from .rescal_als import AlsTrace, als_objective, fit_rescal_als
from .io import load_model, save_model

__all__ = [
    "KINDS", "LatentModel", "ModelConfig", "AlsTrace", "als_objective", "dense_gradient",
    "fit_rescal_als", "gradient", "init_model", "load_model", "loss_and_gradient",
    "nearest_relations", "ntn_from_rescal", "param_count", "param_shapes", "save_model",
    "score", "score_gradient", "score_many", "transe_rewritten_score",
]
