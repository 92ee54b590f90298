"""Models that combine latent scores with observed graph features."""
from .additive import (
    AdditiveModel,
    additive_score,
    fit_additive,
    init_additive,
    load_additive,
    neighbor_features,
    save_additive,
)
from .are import AreConfig, AreDiverged, AreModel, are_score, fit_are, load_are, save_are
from .stacking import PlattCalibrator, StackedModel, fit_stacker, platt_calibrate

__all__ = [
    "AdditiveModel", "AreConfig", "AreDiverged", "AreModel", "PlattCalibrator", "StackedModel",
    "additive_score", "are_score", "fit_additive", "fit_are", "fit_stacker", "init_additive",
    "load_additive", "load_are", "neighbor_features", "platt_calibrate", "save_additive",
    "save_are",
]
