"""Latent feature models: RESCAL, E-MLP, ER-MLP, NTN, SE and TransE.

Every model is a :class:`LatentModel` holding a :class:`ModelConfig` and a
dict of float64 arrays. Per-relation blocks are stacked along a leading
``N_r`` axis, per-entity blocks along ``N_e``; ER-MLP's ``C`` and ``w`` are
global. Scores follow the usual convention that larger means more likely.

Gradients are returned sparsely as ``{(name, index): array}`` where
``index`` is a row of the leading axis or ``Ellipsis`` for a global block,
so an SGD step costs the same no matter how many entities exist.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("rescal", "emlp", "ermlp", "ntn", "se", "transe")
LOSSES = ("log", "squared", "margin")

# leading-axis owner of each parameter block: entity, relation or global
_LAYOUT = {
    "rescal": {"E": "entity", "W": "relation"},
    "emlp": {"E": "entity", "A": "relation", "w": "relation"},
    "ermlp": {"E": "entity", "R": "relation", "C": "global", "w": "global"},
    "ntn": {"E": "entity", "A": "relation", "B": "relation", "w": "relation"},
    "se": {"E": "entity", "As": "relation", "Ao": "relation"},
    "transe": {"E": "entity", "R": "relation"},
}


@dataclass(frozen=True)
class ModelConfig:
    """Model kind plus the latent dimensions it uses.

    ``entity_dim`` is H_e, ``relation_dim`` H_r (ER-MLP), ``hidden_a`` H_a
    (E-MLP, NTN, SE), ``hidden_b`` H_b (NTN) and ``hidden_c`` H_c (ER-MLP).
    """

    kind: str
    entity_dim: int
    relation_dim: int = 0
    hidden_a: int = 0
    hidden_b: int = 0
    hidden_c: int = 0
    nonlinearity: str = "tanh"
    distance: str = "squared"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.nonlinearity not in ("tanh", "identity"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.distance not in ("squared", "l1"):
            raise ValueError(f"unknown distance {self.distance!r}")
        if self.entity_dim < 1:
            raise ValueError("entity_dim must be positive")
        need = {
            "emlp": ("hidden_a",),
            "ermlp": ("relation_dim", "hidden_c"),
            "se": ("hidden_a",),
        }.get(self.kind, ())
        for name in need:
            if getattr(self, name) < 1:
                raise ValueError(f"{self.kind} needs a positive {name}")
        if self.kind == "ntn":
            if self.hidden_a < 0 or self.hidden_b < 0 or self.hidden_a + self.hidden_b < 1:
                raise ValueError("ntn needs hidden_a + hidden_b >= 1")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def param_shapes(cfg: ModelConfig, num_entities: int, num_relations: int) -> dict:
    h, nr = cfg.entity_dim, num_relations
    ha, hb, hc, hr = cfg.hidden_a, cfg.hidden_b, cfg.hidden_c, cfg.relation_dim
    shapes = {"E": (num_entities, h)}
    if cfg.kind == "rescal":
        shapes["W"] = (nr, h, h)
    elif cfg.kind == "emlp":
        shapes.update(A=(nr, 2 * h, ha), w=(nr, ha))
    elif cfg.kind == "ermlp":
        shapes.update(R=(nr, hr), C=(2 * h + hr, hc), w=(hc,))
    elif cfg.kind == "ntn":
        shapes.update(A=(nr, 2 * h, ha), B=(nr, hb, h, h), w=(nr, ha + hb))
    elif cfg.kind == "se":
        shapes.update(As=(nr, ha, h), Ao=(nr, ha, h))
    else:
        shapes["R"] = (nr, h)
    return shapes


def param_count(cfg: ModelConfig, num_entities: int, num_relations: int) -> int:
    """Number of free parameters, from the closed-form per-kind expressions."""
    ne, nr, h = num_entities, num_relations, cfg.entity_dim
    ha, hb, hc, hr = cfg.hidden_a, cfg.hidden_b, cfg.hidden_c, cfg.relation_dim
    if cfg.kind == "rescal":
        return nr * h * h + ne * h
    if cfg.kind == "emlp":
        return nr * (ha + ha * 2 * h) + ne * h
    if cfg.kind == "ermlp":
        return hc + hc * (2 * h + hr) + nr * hr + ne * h
    if cfg.kind == "ntn":
        # B_k holds H_b slices of H_e x H_e per relation
        return nr * h * h * hb + nr * (hb + ha) + 2 * nr * h * ha + ne * h
    if cfg.kind == "se":
        return 2 * nr * h * ha + ne * h
    return nr * h + ne * h


@dataclass
class LatentModel:
    config: ModelConfig
    params: dict
    num_entities: int
    num_relations: int
    meta: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.config.kind

    def copy(self) -> "LatentModel":
        return LatentModel(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            self.num_entities,
            self.num_relations,
            dict(self.meta),
        )

    def layout(self) -> dict:
        return _LAYOUT[self.kind]

    def size(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def check_triples(self, triples) -> np.ndarray:
        t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if t.size and (
            t[:, [0, 2]].min() < 0
            or t[:, [0, 2]].max() >= self.num_entities
            or t[:, 1].min() < 0
            or t[:, 1].max() >= self.num_relations
        ):
            raise IndexError(
                f"triple ids exceed model dimensions ({self.num_entities} entities, "
                f"{self.num_relations} relations)"
            )
        return t


def init_model(cfg: ModelConfig, num_entities: int, num_relations: int, seed: int = 0) -> LatentModel:
    """Gaussian init with standard deviation ``1/sqrt(H_e)``.

    TransE entity rows are then scaled to unit norm.
    """
    if num_entities < 1 or num_relations < 1:
        raise ValueError("model needs at least one entity and one relation")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(cfg.entity_dim)
    params = {
        name: rng.normal(0.0, scale, size=shape)
        for name, shape in param_shapes(cfg, num_entities, num_relations).items()
    }
    if cfg.kind == "transe":
        E = params["E"]
        E /= np.linalg.norm(E, axis=1, keepdims=True)
    return LatentModel(cfg, params, num_entities, num_relations, {"seed": int(seed)})


# nonlinearity ------------------------------------------------------------

def _g(cfg, x):
    return np.tanh(x) if cfg.nonlinearity == "tanh" else x


def _g_prime(cfg, gx):
    # derivative expressed through g(x)
    return 1.0 - gx * gx if cfg.nonlinearity == "tanh" else np.ones_like(gx)


# scoring -----------------------------------------------------------------

def score_many(model: LatentModel, triples) -> np.ndarray:
    """Scores of an ``(n, 3)`` array of triples."""
    t = model.check_triples(triples)
    s, r, o = t[:, 0], t[:, 1], t[:, 2]
    p, cfg = model.params, model.config
    es, eo = p["E"][s], p["E"][o]
    kind = model.kind
    if kind == "rescal":
        return np.einsum("na,nab,nb->n", es, p["W"][r], eo)
    if kind == "emlp":
        phi = np.concatenate([es, eo], axis=1)
        h = np.einsum("nd,nda->na", phi, p["A"][r])
        return np.sum(p["w"][r] * _g(cfg, h), axis=1)
    if kind == "ermlp":
        phi = np.concatenate([es, eo, p["R"][r]], axis=1)
        return _g(cfg, phi @ p["C"]) @ p["w"]
    if kind == "ntn":
        phi = np.concatenate([es, eo], axis=1)
        ha = np.einsum("nd,nda->na", phi, p["A"][r])
        hb = np.einsum("na,nlab,nb->nl", es, p["B"][r], eo)
        z = np.concatenate([ha, hb], axis=1)
        return np.sum(p["w"][r] * _g(cfg, z), axis=1)
    if kind == "se":
        d = np.einsum("nab,nb->na", p["As"][r], es) - np.einsum("nab,nb->na", p["Ao"][r], eo)
        return -np.abs(d).sum(axis=1)
    d = es + p["R"][r] - eo
    if cfg.distance == "l1":
        return -np.abs(d).sum(axis=1)
    return -np.einsum("na,na->n", d, d)


def score(model: LatentModel, t) -> float:
    """Score of a single ``(subject, relation, object)`` triple."""
    return float(score_many(model, [t])[0])


def transe_rewritten_score(model: LatentModel, t, atol: float = 1e-8) -> float:
    """TransE score through the inner-product form valid for unit-norm entities.

    Computes ``-(2 r.(e_i - e_j) - 2 e_i.e_j + |r|^2)``, which differs from
    the direct squared-distance score by the constant ``|e_i|^2 + |e_j|^2``
    (= 2 under the constraint), so candidate rankings coincide.
    """
    if model.kind != "transe" or model.config.distance != "squared":
        raise ValueError("rewrite applies to TransE with squared euclidean distance")
    (s, k, o), = model.check_triples([t])
    E, R = model.params["E"], model.params["R"]
    ei, ej, r = E[s], E[o], R[k]
    for v in (ei, ej):
        if abs(np.linalg.norm(v) - 1.0) > atol:
            raise ValueError("entity embeddings must be unit norm for the rewritten score")
    return float(-(2.0 * r @ (ei - ej) - 2.0 * ei @ ej + r @ r))


# gradients ---------------------------------------------------------------

def _add(grad, key, value):
    if key in grad:
        grad[key] = grad[key] + value
    else:
        grad[key] = value


def score_gradient(model: LatentModel, t) -> dict:
    """Sparse gradient of the score of one triple w.r.t. every touched block."""
    (s, k, o), = model.check_triples([t])
    s, k, o = int(s), int(k), int(o)
    p, cfg, kind = model.params, model.config, model.kind
    es, eo = p["E"][s], p["E"][o]
    h = cfg.entity_dim
    g = {}
    if kind == "rescal":
        W = p["W"][k]
        _add(g, ("E", s), W @ eo)
        _add(g, ("E", o), W.T @ es)
        g[("W", k)] = np.outer(es, eo)
    elif kind == "emlp":
        A, w = p["A"][k], p["w"][k]
        phi = np.concatenate([es, eo])
        a = _g(cfg, phi @ A)
        dh = w * _g_prime(cfg, a)
        g[("w", k)] = a
        g[("A", k)] = np.outer(phi, dh)
        dphi = A @ dh
        _add(g, ("E", s), dphi[:h])
        _add(g, ("E", o), dphi[h:])
    elif kind == "ermlp":
        C, w = p["C"], p["w"]
        phi = np.concatenate([es, eo, p["R"][k]])
        a = _g(cfg, phi @ C)
        dh = w * _g_prime(cfg, a)
        g[("w", Ellipsis)] = a
        g[("C", Ellipsis)] = np.outer(phi, dh)
        dphi = C @ dh
        _add(g, ("E", s), dphi[:h])
        _add(g, ("E", o), dphi[h:2 * h])
        g[("R", k)] = dphi[2 * h:]
    elif kind == "ntn":
        A, B, w = p["A"][k], p["B"][k], p["w"][k]
        ha_dim = cfg.hidden_a
        phi = np.concatenate([es, eo])
        z = np.concatenate([phi @ A, np.einsum("a,lab,b->l", es, B, eo)])
        a = _g(cfg, z)
        dz = w * _g_prime(cfg, a)
        g[("w", k)] = a
        dza, dzb = dz[:ha_dim], dz[ha_dim:]
        g[("A", k)] = np.outer(phi, dza)
        g[("B", k)] = dzb[:, None, None] * np.outer(es, eo)[None, :, :]
        dphi = A @ dza
        _add(g, ("E", s), dphi[:h] + np.einsum("l,lab,b->a", dzb, B, eo))
        _add(g, ("E", o), dphi[h:] + np.einsum("l,lab,a->b", dzb, B, es))
    elif kind == "se":
        As, Ao = p["As"][k], p["Ao"][k]
        sgn = np.sign(As @ es - Ao @ eo)
        g[("As", k)] = -np.outer(sgn, es)
        g[("Ao", k)] = np.outer(sgn, eo)
        _add(g, ("E", s), -As.T @ sgn)
        _add(g, ("E", o), Ao.T @ sgn)
    else:
        d = es + p["R"][k] - eo
        u = np.sign(d) if cfg.distance == "l1" else 2.0 * d
        _add(g, ("E", s), -u)
        _add(g, ("E", o), u)
        g[("R", k)] = -u
    return g


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def loss_and_gradient(model: LatentModel, t, loss: str = "log", label=None,
                      negative=None, margin: float = 1.0):
    """Per-example loss and its sparse gradient.

    ``log`` and ``squared`` need ``label`` in {0, 1} and act on
    ``sigmoid(f(t))``; ``margin`` needs a ``negative`` triple and uses
    ``max(margin + f(negative) - f(t), 0)``.
    """
    if loss == "margin":
        if negative is None:
            raise ValueError("margin loss needs a negative triple")
        fp, fn = score_many(model, [t, negative])
        value = max(margin + fn - fp, 0.0)
        if value <= 0.0:
            return 0.0, {}
        grad = score_gradient(model, negative)
        for key, v in score_gradient(model, t).items():
            _add(grad, key, -v)
        return float(value), grad
    if loss not in ("log", "squared"):
        raise ValueError(f"unknown loss {loss!r}")
    if label not in (0, 1):
        raise ValueError("label must be 0 or 1")
    f = score(model, t)
    prob = float(_sigmoid(f))
    if loss == "log":
        value = float(np.logaddexp(0.0, -f) if label == 1 else np.logaddexp(0.0, f))
        coef = prob - label
    else:
        value = (prob - label) ** 2
        coef = 2.0 * (prob - label) * prob * (1.0 - prob)
    grad = {key: coef * v for key, v in score_gradient(model, t).items()}
    return value, grad


def gradient(model: LatentModel, t, loss: str = "log", label=None, negative=None,
             margin: float = 1.0) -> dict:
    return loss_and_gradient(model, t, loss, label, negative, margin)[1]


def dense_gradient(model: LatentModel, grad: dict) -> dict:
    """Scatter a sparse gradient into arrays shaped like ``model.params``."""
    out = {name: np.zeros_like(v) for name, v in model.params.items()}
    for (name, idx), v in grad.items():
        out[name][idx] += v
    return out


# model surgery ------------------------------------------------------------

def ntn_from_rescal(model: LatentModel) -> LatentModel:
    """Express a RESCAL model as an equivalent NTN.

    Uses ``H_b = H_e^2`` one-hot slices ordered like column-stacked
    ``vec(W_k)``, an empty additive layer and identity nonlinearity, with
    ``w_k = vec(W_k)``.
    """
    if model.kind != "rescal":
        raise ValueError("expected a RESCAL model")
    h = model.config.entity_dim
    W = model.params["W"]
    nr = W.shape[0]
    deltas = np.zeros((h * h, h, h))
    for b in range(h):
        for a in range(h):
            deltas[b * h + a, a, b] = 1.0
    cfg = ModelConfig("ntn", h, hidden_a=0, hidden_b=h * h, nonlinearity="identity")
    params = {
        "E": model.params["E"].copy(),
        "A": np.zeros((nr, 2 * h, 0)),
        "B": np.broadcast_to(deltas, (nr, h * h, h, h)).copy(),
        "w": np.stack([W[k].reshape(-1, order="F") for k in range(nr)]),
    }
    return LatentModel(cfg, params, model.num_entities, nr, dict(model.meta))


def nearest_relations(model: LatentModel, k: int, top: int = 3):
    """Relations whose embeddings are closest to relation ``k``.

    Returns ``[(relation_id, squared_distance), ...]`` in ascending distance,
    ties broken by id, excluding ``k`` itself.
    """
    if "R" not in model.params:
        raise ValueError(f"{model.kind} has no relation embeddings")
    R = model.params["R"]
    if not 0 <= k < R.shape[0]:
        raise IndexError(f"relation id {k} out of range")
    d = np.sum((R - R[k]) ** 2, axis=1)
    ids = np.arange(R.shape[0])
    order = np.lexsort((ids, d))
    order = order[order != k][:max(top, 0)]
    return [(int(m), float(d[m])) for m in order]
