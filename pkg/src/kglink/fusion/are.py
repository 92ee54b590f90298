"""Additive relational effects: a RESCAL score plus a PRA linear score.

The latent part only has to explain what the path features cannot. Both
parts are fitted alternately on a shared log loss: one SGD epoch on the
latent parameters with the PRA score as a fixed offset, then a warm-started
L1 logistic refit of the PRA weights with the latent score as offset.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from ..graph import KnowledgeGraph
from ..graphfeat.pra import PathWalker, PraModel, enumerate_path_types
from ..latent.io import load_model, save_model
from ..latent.models import LatentModel, ModelConfig, init_model, score_gradient, score_many
from ..latent.rescal_als import fit_rescal_als
from ..logistic import fit_l1_logistic, mean_log_loss
from ..sampling import build_training_set
from ..seeding import derive_seed
from ..training.sgd import apply_step, touched_keys

log = logging.getLogger(__name__)

MAX_HALVINGS = 6


class AreDiverged(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class AreConfig:
    """Knobs for :func:`fit_are`. ``rank = 0`` disables the latent part,
    ``use_pra = False`` leaves only a per-relation bias on the graph side."""

    rank: int = 10
    use_pra: bool = True
    max_length: int = 2
    budget: int | None = None
    l1: float = 1e-3
    l2: float = 1e-2
    learning_rate: float = 0.05
    rounds: int = 50
    tol: float = 1e-6
    init: str = "als"
    als_iters: int = 20
    als_lambda: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.rank < 0:
            raise ValueError("rank must be >= 0")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.init not in ("als", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.l1 < 0 or self.l2 < 0 or self.learning_rate < 0:
            raise ValueError("l1, l2 and learning_rate must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AreModel:
    """``latent`` may be None (graph part only); ``pra`` maps relation id to model."""

    latent: LatentModel | None
    pra: dict
    graph: KnowledgeGraph
    trace: list = field(default_factory=list, repr=False)
    missing: set = field(default_factory=set, repr=False)

    def __post_init__(self):
        self._walker = PathWalker(self.graph)
        if self.latent is not None:
            if self.latent.kind != "rescal":
                raise ValueError("the latent part of ARE is a RESCAL model")
            if (self.latent.num_entities, self.latent.num_relations) != (
                    self.graph.num_entities, self.graph.num_relations):
                raise ValueError("latent model and graph disagree on dimensions")

    def components(self, triples):
        """``(latent_scores, pra_scores)`` for an ``(n, 3)`` array."""
        t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        lat = score_many(self.latent, t) if self.latent is not None else np.zeros(len(t))
        pra = np.zeros(len(t))
        for k in np.unique(t[:, 1]).tolist():
            sel = t[:, 1] == k
            m = self.pra.get(k)
            if m is None:
                self.missing.add(k)
                continue
            pra[sel] = m.linear_score(self.graph, t[sel][:, [0, 2]], self._walker)
        return lat, pra

    def score_many(self, triples) -> np.ndarray:
        lat, pra = self.components(triples)
        return lat + pra


def are_score(model: AreModel, t) -> float:
    return float(model.score_many([t])[0])


class _RelationBlock:
    """Fixed PRA design matrix and current weights for one relation."""

    def __init__(self, k, rows, path_types, X):
        self.k, self.rows, self.path_types, self.X = k, rows, tuple(path_types), X
        self.w = np.zeros(len(self.path_types))
        self.b = 0.0

    def scores(self):
        return self.X @ self.w + self.b


def _pra_scores(blocks, n):
    p = np.zeros(n)
    for blk in blocks:
        p[blk.rows] = blk.scores()
    return p


def _objective(z, y, blocks, latent, l1, l2):
    n = len(y)
    value = mean_log_loss(z, y)
    value += sum(len(b.rows) / n * l1 * np.abs(b.w).sum() for b in blocks)
    if latent is not None:
        value += 0.5 * l2 * sum(float(v.ravel() @ v.ravel()) for v in latent.params.values())
    return value


def _latent_epoch(model, triples, y, offset, lr, l2, rng):
    for r in rng.permutation(len(triples)):
        t = triples[r]
        z = float(score_many(model, t[None, :])[0]) + offset[r]
        coef = float(expit(z)) - y[r]
        grad = {key: coef * v for key, v in score_gradient(model, t).items()}
        apply_step(model, grad, touched_keys(model, t), lr, l2)


def fit_are(kg: KnowledgeGraph, data=None, config: AreConfig | None = None):
    """Alternating fit of latent and path-feature parameters.

    Parameters
    ----------
    kg : KnowledgeGraph
        Training graph; path features are always read from it.
    data : (triples, labels), optional
        Labeled examples. Defaults to the positives of ``kg`` plus one
        perturbation negative per side.
    config : AreConfig

    Returns
    -------
    model : AreModel
    trace : list of float
        Joint objective before the first round and after each round; it
        never increases because latent epochs that would raise it are
        retried at half the step and finally skipped.
    """
    cfg = config or AreConfig()
    if data is None:
        data = build_training_set(kg, "perturb", seed=derive_seed(cfg.seed, "are-negatives")).arrays()
    triples = np.asarray(data[0], dtype=np.int64).reshape(-1, 3)
    y = np.asarray(data[1], dtype=np.float64).ravel()
    if len(triples) != len(y) or len(y) == 0:
        raise ValueError("need one label per triple")
    if y.min() == y.max():
        raise ValueError("ARE needs positive and negative examples")

    walker = PathWalker(kg)
    blocks = []
    for k in np.unique(triples[:, 1]).tolist():
        rows = np.flatnonzero(triples[:, 1] == k)
        types = enumerate_path_types(kg, k, cfg.max_length, cfg.budget,
                                     derive_seed(cfg.seed, "are-paths", k)) if cfg.use_pra else []
        X = walker.features(triples[rows][:, [0, 2]], types)
        blocks.append(_RelationBlock(k, rows, types, X))

    latent = None
    if cfg.rank > 0:
        if cfg.init == "als":
            latent, _ = fit_rescal_als(kg, cfg.rank, cfg.als_lambda, cfg.als_lambda,
                                       cfg.als_iters, derive_seed(cfg.seed, "are-init"))
        else:
            latent = init_model(ModelConfig("rescal", cfg.rank), kg.num_entities,
                                kg.num_relations, derive_seed(cfg.seed, "are-init"))

    def lat_scores(m):
        return score_many(m, triples) if m is not None else np.zeros(len(y))

    lat = lat_scores(latent)
    p = _pra_scores(blocks, len(y))
    current = _objective(lat + p, y, blocks, latent, cfg.l1, cfg.l2)
    trace = [current]
    increases = 0
    for rnd in range(cfg.rounds):
        for blk in blocks:
            yk = y[blk.rows]
            if yk.min() == yk.max():
                continue  # one-class relation: leave its weights alone
            blk.w, blk.b, _ = fit_l1_logistic(blk.X, yk, cfg.l1, cfg.tol / 10,
                                              offset=lat[blk.rows], w0=blk.w, b0=blk.b)
        p = _pra_scores(blocks, len(y))
        value = _objective(lat + p, y, blocks, latent, cfg.l1, cfg.l2)
        if latent is not None:
            rng = np.random.default_rng(derive_seed(cfg.seed, "are-epoch", rnd))
            order_seed = int(rng.integers(2**62))
            lr = cfg.learning_rate
            for _ in range(MAX_HALVINGS):
                cand = latent.copy()
                _latent_epoch(cand, triples, y, p, lr, cfg.l2, np.random.default_rng(order_seed))
                lat_c = lat_scores(cand)
                value_c = _objective(lat_c + p, y, blocks, cand, cfg.l1, cfg.l2)
                if np.isfinite(value_c) and value_c <= value:
                    latent, lat, value = cand, lat_c, value_c
                    break
                lr *= 0.5
        previous = trace[-1]
        trace.append(value)
        log.debug("are round %d objective %.8g", rnd, value)
        increases = increases + 1 if value - previous > cfg.tol else 0
        if increases >= 3:
            raise AreDiverged("joint loss increased for 3 consecutive rounds", trace)
        if abs(previous - value) < cfg.tol:
            break

    pra = {}
    for blk in blocks:
        keep = blk.w != 0.0
        pra[blk.k] = PraModel(blk.k, tuple(t for t, m in zip(blk.path_types, keep) if m),
                              blk.w[keep], blk.b)
    model = AreModel(latent, pra, kg, trace)
    if latent is not None:
        latent.meta["are"] = cfg.to_dict()
    return model, trace


# persistence --------------------------------------------------------------

ARE_FORMAT = "kglink-are"


def save_are(directory, model: AreModel) -> dict:
    """Write ``latent.kglm`` (if any), ``pra.json`` and ``are.json`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    manifest = {"format": ARE_FORMAT, "version": 1, "latent": None, "pra": "pra.json"}
    if model.latent is not None:
        save_model(os.path.join(directory, "latent.kglm"), model.latent)
        manifest["latent"] = "latent.kglm"
    with open(os.path.join(directory, "pra.json"), "w", encoding="utf-8") as fh:
        json.dump({"format": "kglink-pra", "version": 1,
                   "models": [m.to_json(model.graph) for _, m in sorted(model.pra.items())]},
                  fh, indent=2)
    with open(os.path.join(directory, "are.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def load_are(directory, graph: KnowledgeGraph) -> AreModel:
    with open(os.path.join(directory, "are.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != ARE_FORMAT:
        raise ValueError(f"{directory}: not an ARE model")
    latent = load_model(os.path.join(directory, manifest["latent"])) if manifest["latent"] else None
    with open(os.path.join(directory, manifest["pra"]), encoding="utf-8") as fh:
        data = json.load(fh)
    pra = {}
    for d in data["models"]:
        m = PraModel.from_json(d, graph)
        pra[m.relation] = m
    return AreModel(latent, pra, graph)


__all__ = ["AreConfig", "AreDiverged", "AreModel", "are_score", "fit_are",
           "load_are", "save_are"]
