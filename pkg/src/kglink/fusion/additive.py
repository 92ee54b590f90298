"""Latent subject/object terms plus a same-pair neighborhood term.

``f(i, k, j) = w1[k, j] . sub[i] + w2[k, i] . obj[j] + w3[k] . phi_N(i, j, k)``
where ``phi_N`` lists ``y(i, k', j)`` for every other relation ``k'``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..graph import KnowledgeGraph
from ..logistic import mean_log_loss
from ..sampling import build_training_set
from ..seeding import derive_seed


def neighbor_features(kg: KnowledgeGraph, i: int, j: int, k: int) -> np.ndarray:
    """``[y(i, k', j) for k' != k]``, length ``N_r - 1``."""
    others = [r for r in range(kg.num_relations) if r != k]
    return np.array([1.0 if (int(i), r, int(j)) in kg else 0.0 for r in others])


@dataclass
class AdditiveModel:
    sub: np.ndarray  # (N_e, H)
    obj: np.ndarray  # (N_e, H)
    w1: np.ndarray   # (N_r, N_e, H), indexed [k, object]
    w2: np.ndarray   # (N_r, N_e, H), indexed [k, subject]
    w3: np.ndarray   # (N_r, N_r); row k weighs y(i, k', j), diagonal unused
    graph: KnowledgeGraph

    def _neighbor_term(self, i, j, k):
        phi = neighbor_features(self.graph, i, j, k)
        w = np.delete(self.w3[k], k)
        return float(w @ phi), phi

    def score_many(self, triples) -> np.ndarray:
        t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        s, k, o = t[:, 0], t[:, 1], t[:, 2]
        out = np.einsum("nh,nh->n", self.w1[k, o], self.sub[s])
        out += np.einsum("nh,nh->n", self.w2[k, s], self.obj[o])
        out += np.array([self._neighbor_term(i, j, r)[0] for i, r, j in t])
        return out

    def copy(self) -> "AdditiveModel":
        return AdditiveModel(self.sub.copy(), self.obj.copy(), self.w1.copy(),
                             self.w2.copy(), self.w3.copy(), self.graph)


def additive_score(model: AdditiveModel, t, kg: KnowledgeGraph | None = None) -> float:
    """Score of one triple; ``kg`` overrides the graph the neighborhood term reads."""
    if kg is not None and kg is not model.graph:
        model = AdditiveModel(model.sub, model.obj, model.w1, model.w2, model.w3, kg)
    return float(model.score_many([t])[0])


def init_additive(kg: KnowledgeGraph, dim: int, seed: int = 0, scale: float = 0.1) -> AdditiveModel:
    rng = np.random.default_rng(seed)
    ne, nr = kg.num_entities, kg.num_relations
    return AdditiveModel(
        rng.normal(0, scale, (ne, dim)), rng.normal(0, scale, (ne, dim)),
        rng.normal(0, scale, (nr, ne, dim)), rng.normal(0, scale, (nr, ne, dim)),
        np.zeros((nr, nr)), kg,
    )


def fit_additive(kg: KnowledgeGraph, data=None, dim: int = 5, learning_rate: float = 0.1,
                 l2: float = 1e-3, epochs: int = 50, seed: int = 0):
    """SGD on log loss with a proximal ridge step on every touched block.

    Returns ``(model, trace)`` with the mean training log loss after each epoch.
    """
    if data is None:
        data = build_training_set(kg, "perturb", seed=derive_seed(seed, "additive-negatives")).arrays()
    triples = np.asarray(data[0], dtype=np.int64).reshape(-1, 3)
    y = np.asarray(data[1], dtype=np.float64).ravel()
    if y.min() == y.max():
        raise ValueError("additive fit needs positive and negative examples")
    m = init_additive(kg, dim, derive_seed(seed, "additive-init"))
    shrink = 1.0 + learning_rate * l2
    phis = [neighbor_features(kg, i, j, k) for i, k, j in triples]
    trace = []
    for epoch in range(epochs):
        rng = np.random.default_rng(derive_seed(seed, "additive-epoch", epoch))
        for r in rng.permutation(len(triples)):
            i, k, j = (int(x) for x in triples[r])
            phi = phis[r]
            w3 = np.delete(m.w3[k], k)
            f = m.w1[k, j] @ m.sub[i] + m.w2[k, i] @ m.obj[j] + w3 @ phi
            g = float(expit(f)) - y[r]
            d_sub, d_w1 = g * m.w1[k, j], g * m.sub[i]
            d_obj, d_w2 = g * m.w2[k, i], g * m.obj[j]
            m.sub[i] = (m.sub[i] - learning_rate * d_sub) / shrink
            m.w1[k, j] = (m.w1[k, j] - learning_rate * d_w1) / shrink
            m.obj[j] = (m.obj[j] - learning_rate * d_obj) / shrink
            m.w2[k, i] = (m.w2[k, i] - learning_rate * d_w2) / shrink
            others = np.arange(kg.num_relations) != k
            m.w3[k, others] = (w3 - learning_rate * g * phi) / shrink
        trace.append(mean_log_loss(m.score_many(triples), y))
    return m, trace


def save_additive(path, model: AdditiveModel) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, format=np.array("kglink-additive"), version=np.array(1), sub=model.sub,
                 obj=model.obj, w1=model.w1, w2=model.w2, w3=model.w3)


def load_additive(path, graph: KnowledgeGraph) -> AdditiveModel:
    with np.load(path, allow_pickle=False) as z:
        if str(z["format"]) != "kglink-additive":
            raise ValueError(f"{path}: not an additive model")
        m = AdditiveModel(z["sub"], z["obj"], z["w1"], z["w2"], z["w3"], graph)
    if m.sub.shape[0] != graph.num_entities or m.w3.shape[0] != graph.num_relations:
        raise ValueError(f"{path}: model does not match the graph's dimensions")
    return m
