"""Path Ranking Algorithm: random-walk path features with sparse logistic weights.

A path type is a sequence of ``(relation, direction)`` steps. Its feature
for a pair ``(i, j)`` is the probability that a walk from ``i`` which picks
an outgoing edge of the step's relation uniformly at random, at every step,
ends in ``j``. Walks with nowhere to go die (probability mass is lost).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .. import kernels
from ..graph import KnowledgeGraph
from ..logistic import fit_l1_logistic

FORWARD, INVERSE = "forward", "inverse"


@dataclass(frozen=True)
class PathType:
    steps: tuple  # ((relation_id, "forward" | "inverse"), ...)

    def __post_init__(self):
        if len(self.steps) < 1:
            raise ValueError("a path type needs at least one step")
        steps = tuple((int(r), str(d)) for r, d in self.steps)
        for _, d in steps:
            if d not in (FORWARD, INVERSE):
                raise ValueError(f"unknown direction {d!r}")
        object.__setattr__(self, "steps", steps)

    def __len__(self):
        return len(self.steps)

    def describe(self, kg: KnowledgeGraph) -> str:
        return "(" + ", ".join(
            kg.relations[r] + ("" if d == FORWARD else "^-1") for r, d in self.steps
        ) + ")"

    def to_json(self, kg: KnowledgeGraph) -> list:
        return [[kg.relations[r], d] for r, d in self.steps]

    @classmethod
    def from_json(cls, data, kg: KnowledgeGraph) -> "PathType":
        return cls(tuple((kg.relation_id(r), d) for r, d in data))


def path(*steps) -> PathType:
    """``path((k1, "forward"), (k2, "inverse"))`` shorthand."""
    return PathType(tuple(steps))


class PathWalker:
    """Walk distributions over one graph, cached per (source, path prefix)."""

    def __init__(self, kg: KnowledgeGraph):
        self.kg = kg
        self._csr = {}
        self._cache = {}

    def _arrays(self, r, d):
        key = (r, d)
        if key not in self._csr:
            m = self.kg.adjacency(r, d)
            self._csr[key] = (m.indptr.astype(np.intc), m.indices.astype(np.intc))
        return self._csr[key]

    def distribution(self, i: int, t: PathType) -> np.ndarray:
        """Probability of ending at every entity after walking ``t`` from ``i``."""
        key = (int(i), t.steps)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if len(t) == 1:
            prob = np.zeros(self.kg.num_entities)
            prob[int(i)] = 1.0
        else:
            prob = self.distribution(i, PathType(t.steps[:-1]))
        indptr, indices = self._arrays(*t.steps[-1])
        out = kernels.walk_step(indptr, indices, prob)
        out.setflags(write=False)
        self._cache[key] = out
        return out

    def features(self, pairs, path_types) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        X = np.zeros((len(pairs), len(path_types)))
        for c, t in enumerate(path_types):
            for r, (i, j) in enumerate(pairs):
                X[r, c] = self.distribution(i, t)[j]
        return X


def _exact_probability(kg, i, j, t):
    mass = {int(i): Fraction(1)}
    for r, d in t.steps:
        nxt: dict = {}
        for u, m in mass.items():
            nb = kg.neighbor_array(u, r, d)
            if len(nb) == 0:
                continue
            share = m / len(nb)
            for v in nb.tolist():
                nxt[v] = nxt.get(v, Fraction(0)) + share
        mass = nxt
    return mass.get(int(j), Fraction(0))


def path_probability(kg: KnowledgeGraph, i: int, j: int, t: PathType, exact: bool = False):
    """Probability that the uniform random walk along ``t`` from ``i`` ends at ``j``.

    With ``exact=True`` the walk is done in rational arithmetic and a
    :class:`fractions.Fraction` is returned.
    """
    if exact:
        return _exact_probability(kg, i, j, t)
    return float(PathWalker(kg).distribution(i, t)[j])


def pra_features(kg: KnowledgeGraph, i: int, j: int, k: int, path_types, walker=None) -> np.ndarray:
    """Feature vector of path probabilities for the candidate triple ``(i, k, j)``."""
    walker = walker or PathWalker(kg)
    return np.array([walker.distribution(i, t)[j] for t in path_types], dtype=np.float64)


def enumerate_path_types(kg: KnowledgeGraph, k: int, max_length: int = 3,
                         budget: int | None = None, seed: int = 0) -> list:
    """Path types of length ``1..max_length`` linking some ``k``-subject to one of its ``k``-objects.

    The one-step path ``(k, forward)`` is excluded. When more than
    ``budget`` types qualify a seeded uniform subsample is returned.
    Results are sorted by length, then steps.
    """
    if max_length < 1:
        raise ValueError("max_length must be >= 1")
    steps = [(r, d) for r in range(kg.num_relations) for d in (FORWARD, INVERSE)]
    found = set()
    target = ((int(k), FORWARD),)
    Y = kg.relation_slice(k)
    for i in np.unique(Y.nonzero()[0]).tolist():
        goals = set(kg.neighbor_array(i, k, FORWARD).tolist())
        stack = [((), frozenset([i]))]
        while stack:
            prefix, nodes = stack.pop()
            for r, d in steps:
                nxt = set()
                for u in nodes:
                    nxt.update(kg.neighbor_array(u, r, d).tolist())
                if not nxt:
                    continue
                p = prefix + ((r, d),)
                if p != target and nxt & goals:
                    found.add(p)
                if len(p) < max_length:
                    stack.append((p, frozenset(nxt)))
    ordered = sorted(found, key=lambda p: (len(p), p))
    if budget is not None and len(ordered) > budget:
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(ordered), size=budget, replace=False))
        ordered = [ordered[m] for m in pick]
    return [PathType(p) for p in ordered]


@dataclass
class PraModel:
    relation: int
    path_types: tuple
    weights: np.ndarray
    bias: float = 0.0
    trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.path_types = tuple(self.path_types)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if len(self.weights) != len(self.path_types):
            raise ValueError("one weight per path type")
        if len(set(self.path_types)) != len(self.path_types):
            raise ValueError("duplicate path types")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("non-finite weights")

    def linear_score(self, kg: KnowledgeGraph, pairs, walker=None) -> np.ndarray:
        """``w . phi + bias`` for each ``(i, j)`` pair."""
        walker = walker or PathWalker(kg)
        X = walker.features(pairs, self.path_types)
        return X @ self.weights + self.bias

    def to_json(self, kg: KnowledgeGraph) -> dict:
        return {
            "relation": kg.relations[self.relation],
            "path_types": [t.to_json(kg) for t in self.path_types],
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
        }

    @classmethod
    def from_json(cls, data: dict, kg: KnowledgeGraph) -> "PraModel":
        return cls(
            kg.relation_id(data["relation"]),
            tuple(PathType.from_json(t, kg) for t in data["path_types"]),
            np.array(data["weights"], dtype=np.float64),
            float(data["bias"]),
        )


def fit_pra(kg: KnowledgeGraph, k: int, positives, negatives, l1_strength: float = 1e-3,
            tol: float = 1e-8, path_types=None, max_length: int = 3, budget: int | None = None,
            seed: int = 0, offset=None, walker=None) -> PraModel:
    """L1-regularized logistic regression over path features for relation ``k``.

    ``positives`` and ``negatives`` are ``(n, 3)`` triples of relation ``k``;
    features come from ``kg`` (the training graph). Path types default to
    :func:`enumerate_path_types`. Zero-weight path types are pruned. ``offset``
    adds a fixed per-example term to the logit (used when fitting jointly
    with a latent model).
    """
    pos = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    neg = np.asarray(negatives, dtype=np.int64).reshape(-1, 3)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("fit_pra needs positive and negative examples")
    if path_types is None:
        path_types = enumerate_path_types(kg, k, max_length, budget, seed)
    path_types = tuple(path_types)
    walker = walker or PathWalker(kg)
    triples = np.concatenate([pos, neg])
    y = np.r_[np.ones(len(pos)), np.zeros(len(neg))]
    X = walker.features(triples[:, [0, 2]], path_types)
    w, b, trace = fit_l1_logistic(X, y, l1_strength, tol, offset=offset)
    keep = w != 0.0
    if not keep.any() and offset is None:
        base = y.mean()
        b = float(np.log(base / (1.0 - base)))
    return PraModel(int(k), tuple(t for t, m in zip(path_types, keep) if m), w[keep], b, trace)


def pra_rules(model: PraModel, kg: KnowledgeGraph) -> list:
    """Horn-clause rendering of each weighted path, strongest first.

    Returns ``[(rule_text, weight), ...]``; inverse steps swap arguments.
    """
    head = f"(x, {kg.relations[model.relation]}, y)"
    order = sorted(range(len(model.path_types)), key=lambda m: -model.weights[m])
    rules = []
    for m in order:
        if model.weights[m] == 0.0:
            continue
        t = model.path_types[m]
        names = ["x"] + [f"z{n}" for n in range(1, len(t))] + ["y"]
        body = []
        for n, (r, d) in enumerate(t.steps):
            a, b = names[n], names[n + 1]
            if d == INVERSE:
                a, b = b, a
            body.append(f"({a}, {kg.relations[r]}, {b})")
        rules.append((f"{head} ← " + " ∧ ".join(body), float(model.weights[m])))
    return rules


class PraScorer:
    """Scores triples with one :class:`PraModel` per relation over a fixed graph.

    Relations without a model score 0 and are listed in ``missing``.
    """

    def __init__(self, models: dict, kg: KnowledgeGraph):
        self.models = dict(models)
        self.kg = kg
        self.walker = PathWalker(kg)
        self.missing = set()

    def score_many(self, triples) -> np.ndarray:
        t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        out = np.zeros(len(t))
        for k in np.unique(t[:, 1]).tolist():
            sel = t[:, 1] == k
            m = self.models.get(k)
            if m is None:
                self.missing.add(k)
                continue
            out[sel] = m.linear_score(self.kg, t[sel][:, [0, 2]], self.walker)
        return out

    def to_json(self) -> dict:
        return {"models": [m.to_json(self.kg) for _, m in sorted(self.models.items())]}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"format": "kglink-pra", "version": 1, **self.to_json()}, fh, indent=2)

    @classmethod
    def load(cls, path, kg: KnowledgeGraph) -> "PraScorer":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if data.get("format") != "kglink-pra":
            raise ValueError(f"{path}: not a PRA model file")
        models = {}
        for d in data["models"]:
            m = PraModel.from_json(d, kg)
            models[m.relation] = m
        return cls(models, kg)
