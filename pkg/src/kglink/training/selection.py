"""K-fold model selection by mean validation AUC-PR."""
from __future__ import annotations

import numpy as np

from ..graph import KnowledgeGraph
from ..seeding import derive_seed
from .metrics import auc_pr
from .ranking import as_scorer, labeled_eval_set


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold id of each of ``n`` items: a seeded permutation dealt round-robin."""
    perm = np.random.default_rng(seed).permutation(n)
    out = np.empty(n, dtype=np.int64)
    out[perm] = np.arange(n) % folds
    return out


def cross_validate(factory, kg: KnowledgeGraph, grid, folds: int = 3, seed: int = 0,
                   constraints=None):
    """Pick the hyperparameters with the best mean validation AUC-PR.

    Parameters
    ----------
    factory : callable
        ``factory(params, train_kg, seed)`` returns a trained model or scorer.
    grid : sequence of dict
        Candidate hyperparameter settings.

    Returns
    -------
    best : dict
        The winning settings (first wins ties).
    table : list of dict
        One row per (config, fold) with its AUC-PR, plus the per-config mean.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    assign = fold_assignment(len(kg), folds, seed)
    table, means = [], []
    for ci, params in enumerate(grid):
        values = []
        for f in range(folds):
            train = kg.with_triples(kg.triples[assign != f])
            held = kg.triples[assign == f]
            model = factory(dict(params), train, derive_seed(seed, "cv", ci, f))
            triples, labels = labeled_eval_set(held, kg, constraints, derive_seed(seed, "cv-neg", f))
            value = auc_pr(np.asarray(as_scorer(model)(triples)), labels)
            values.append(value)
            table.append({"config": ci, "params": dict(params), "fold": f, "auc_pr": value})
        means.append(float(np.mean(values)))
        table.append({"config": ci, "params": dict(params), "fold": "mean", "auc_pr": means[-1]})
    best = int(np.argmax(means))
    return dict(grid[best]), table
