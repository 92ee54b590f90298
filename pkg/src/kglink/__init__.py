"""Link prediction for knowledge graphs.

Submodules load on first attribute access, so ``import kglink`` stays
cheap and leaves thread settings to the caller (see ``kglink.cli``).
"""
from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "graph": ("KnowledgeGraph", "ParseError", "Triple", "TypeConstraints", "holdout_split",
              "infer_type_constraints", "ingest_triples", "load_graph", "parse_triple_lines",
              "read_triples", "save_graph", "split_sizes"),
    "sampling": ("EpochSampler", "LabeledTriple", "LabeledTripleSet", "build_training_set",
                 "cwa_negatives", "lcwa_negatives", "perturb_negatives"),
    "latent": ("LatentModel", "ModelConfig", "fit_rescal_als", "init_model", "load_model",
               "ntn_from_rescal", "param_count", "save_model", "score", "score_many",
               "transe_rewritten_score"),
    "graphfeat": ("PathType", "PraModel", "PraScorer", "SimilarityKind", "enumerate_path_types",
                  "fit_pra", "path_probability", "pra_features", "pra_rules", "similarity"),
    "fusion": ("AdditiveModel", "AreConfig", "AreModel", "PlattCalibrator", "StackedModel",
               "additive_score", "are_score", "fit_additive", "fit_are", "fit_stacker",
               "platt_calibrate"),
    "training": ("RankingReport", "TrainConfig", "auc_pr", "auc_roc", "cross_validate",
                 "evaluate", "loss_value", "mrr", "rank_entities", "sgd_train"),
    "seeding": ("derive_seed",),
}
_OWNER = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_OWNER) + ["__version__"]


def __getattr__(name):
    mod = _OWNER.get(name)
    if mod is None:
        raise AttributeError(f"module 'kglink' has no attribute {name!r}")
    value = getattr(import_module(f".{mod}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
