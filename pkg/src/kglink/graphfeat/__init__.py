"""Observed graph features: similarity indices and path ranking."""
from .pra import (
    FORWARD,
    INVERSE,
    PathType,
    PathWalker,
    PraModel,
    PraScorer,
    enumerate_path_types,
    fit_pra,
    path,
    path_probability,
    pra_features,
    pra_rules,
)
from .similarity import SimilarityKind, katz_exact, katz_series, similarity, spectral_radius

__all__ = [
    "FORWARD", "INVERSE", "PathType", "PathWalker", "PraModel", "PraScorer", "SimilarityKind",
    "enumerate_path_types", "fit_pra", "katz_exact", "katz_series", "path", "path_probability",
    "pra_features", "pra_rules", "similarity", "spectral_radius",
]
