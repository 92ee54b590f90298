"""Plain SGD over positive/negative pairs for any latent model.

Each step draws one positive and one regime-matched negative. The L2
penalty ``lambda * ||theta||^2 / 2`` is applied only to the blocks an example
touches, as an implicit (proximal) shrink ``theta <- (theta - lr * g) /
(1 + lr * lambda)``, which stays stable for any ``lambda``.

TransE with the margin loss runs through :mod:`kglink.kernels`.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .. import kernels
from ..graph import KnowledgeGraph, TypeConstraints
from ..latent.models import LOSSES, LatentModel, loss_and_gradient
from ..sampling import EpochSampler

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Non-finite loss; ``checkpoint`` holds the last finite parameters."""

    def __init__(self, message, checkpoint: LatentModel, trace: list):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.trace = trace


@dataclass
class TrainConfig:
    loss: str = "margin"
    learning_rate: float = 0.01
    epochs: int = 50
    l2: float = 0.0
    regime: str = "perturb"
    seed: int = 0
    margin: float = 1.0
    normalize_entities: bool = False
    use_kernels: bool = True

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if self.margin <= 0:
            raise ValueError("margin must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def touched_keys(model: LatentModel, t) -> list:
    """Parameter blocks read when scoring ``t``."""
    s, k, o = (int(x) for x in t)
    keys = []
    for name, owner in model.layout().items():
        if owner == "entity":
            keys.extend([(name, s)] if s == o else [(name, s), (name, o)])
        elif owner == "relation":
            keys.append((name, k))
        else:
            keys.append((name, Ellipsis))
    return keys


def apply_step(model: LatentModel, grad: dict, keys, lr: float, l2: float,
               normalize: bool = False) -> None:
    """In-place proximal SGD update of the listed blocks."""
    shrink = 1.0 + lr * l2
    for key in dict.fromkeys(keys):
        name, idx = key
        block = model.params[name]
        g = grad.get(key)
        if g is None:
            block[idx] = block[idx] / shrink
        else:
            block[idx] = (block[idx] - lr * g) / shrink
        if normalize and name == "E":
            norm = np.sqrt(block[idx] @ block[idx])
            if norm > 0.0 and abs(norm - 1.0) > 1e-12:
                block[idx] = block[idx] / norm


def _generic_epoch(model, pos, neg, cfg, normalize):
    total, count = 0.0, 0
    lr, lam = cfg.learning_rate, cfg.l2
    if cfg.loss == "margin":
        for p, n in zip(pos, neg):
            value, grad = loss_and_gradient(model, p, "margin", negative=n, margin=cfg.margin)
            keys = touched_keys(model, n) + touched_keys(model, p)
            apply_step(model, grad, keys, lr, lam, normalize)
            total += value
            count += 1
    else:
        for p, n in zip(pos, neg):
            for t, y in ((p, 1), (n, 0)):
                value, grad = loss_and_gradient(model, t, cfg.loss, label=y)
                apply_step(model, grad, touched_keys(model, t), lr, lam, normalize)
                total += value
                count += 1
    return total, count


def sgd_train(model: LatentModel, kg: KnowledgeGraph, sampler: EpochSampler | None = None,
              cfg: TrainConfig | None = None, constraints: TypeConstraints | None = None,
              callback=None):
    """Train ``model`` on the positives of ``kg``.

    Returns ``(trained_model, trace)`` where ``trace[e]`` is the mean
    per-example loss seen during epoch ``e``. The input model is not modified.
    ``callback(epoch, model, mean_loss)`` runs after every epoch.
    """
    cfg = cfg or TrainConfig()
    sampler = sampler or EpochSampler(kg, cfg.regime, constraints)
    model = model.copy()
    normalize = bool(cfg.normalize_entities)
    use_kernel = (
        cfg.use_kernels and model.kind == "transe" and cfg.loss == "margin"
    )
    positives = np.ascontiguousarray(kg.triples, dtype=np.int64)
    trace = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed) & (2**63 - 1), epoch]))
        order = rng.permutation(len(positives))
        pos, neg = sampler.draw(positives[order], rng)
        checkpoint = model.copy()
        if use_kernel:
            E, R = model.params["E"], model.params["R"]
            total = kernels.transe_margin_epoch(
                E, R, np.ascontiguousarray(pos), np.ascontiguousarray(neg),
                float(cfg.learning_rate), float(cfg.l2), float(cfg.margin),
                model.config.distance == "l1", bool(normalize),
            )
            count = len(pos)
        else:
            total, count = _generic_epoch(model, pos, neg, cfg, normalize)
        mean = total / max(count, 1)
        finite = np.isfinite(mean) and all(np.all(np.isfinite(v)) for v in model.params.values())
        if not finite:
            raise TrainingDiverged(f"non-finite loss in epoch {epoch}", checkpoint, trace)
        trace.append(float(mean))
        log.debug("epoch %d loss %.6g", epoch, mean)
        if callback is not None:
            callback(epoch, model, mean)
    model.meta["train"] = cfg.to_dict()
    return model, trace
