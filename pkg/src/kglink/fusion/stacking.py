"""Stacking of independently trained scorers, and Platt calibration."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..logistic import fit_l2_logistic

PLATT_CAP = 1e3


@dataclass
class StackedModel:
    """Logistic fusion over base-scorer outputs (and optional extra columns).

    Inputs are standardized with the training mean and scale before the
    weights apply. ``scorers`` and ``extra`` are attached with :meth:`bind`.
    """

    weights: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray
    num_base: int
    names: list = field(default_factory=list)
    scorers: list = field(default_factory=list, repr=False)
    extra: object = field(default=None, repr=False)

    def bind(self, scorers, extra=None) -> "StackedModel":
        if len(scorers) != self.num_base:
            raise ValueError(f"expected {self.num_base} base scorers, got {len(scorers)}")
        self.scorers = list(scorers)
        self.extra = extra
        return self

    def fuse(self, features) -> np.ndarray:
        """Fused logit for a precomputed ``(n, num_inputs)`` feature matrix."""
        F = np.asarray(features, dtype=np.float64)
        if F.ndim != 2 or F.shape[1] != len(self.weights):
            raise ValueError(f"fusion expects {len(self.weights)} input columns")
        return ((F - self.mean) / self.scale) @ self.weights + self.bias

    def features(self, triples) -> np.ndarray:
        if not self.scorers:
            raise RuntimeError("no base scorers bound")
        from ..training.ranking import as_scorer

        cols = [np.asarray(as_scorer(s)(triples), dtype=np.float64) for s in self.scorers]
        F = np.column_stack(cols)
        if self.extra is not None:
            F = np.hstack([F, np.asarray(self.extra(triples), dtype=np.float64)])
        return F

    def score_many(self, triples) -> np.ndarray:
        return self.fuse(self.features(triples))

    def to_json(self) -> dict:
        return {
            "format": "kglink-stacked", "version": 1, "names": list(self.names),
            "num_base": self.num_base, "weights": self.weights.tolist(), "bias": self.bias,
            "mean": self.mean.tolist(), "scale": self.scale.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "StackedModel":
        if data.get("format") != "kglink-stacked":
            raise ValueError("not a stacked model")
        return cls(np.array(data["weights"]), float(data["bias"]), np.array(data["mean"]),
                   np.array(data["scale"]), int(data["num_base"]), list(data["names"]))


def fit_stacker(base_scores, labels, extra_features=None, l2: float = 1e-4,
                names=None) -> StackedModel:
    """Logistic regression over held-out base scores.

    Parameters
    ----------
    base_scores : (n, m) array, m >= 2
        Scores of each base model on triples none of them was trained on.
    labels : (n,) 0/1 array with both classes
    extra_features : (n, q) array, optional
        Additional per-triple columns appended to the base scores.
    l2 : float
        Small ridge on the standardized weights; keeps them finite when a
        base scorer separates the data perfectly.
    """
    S = np.asarray(base_scores, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] < 2:
        raise ValueError("stacking needs at least two base scorers")
    F = S if extra_features is None else np.hstack([S, np.asarray(extra_features, dtype=np.float64)])
    mean = F.mean(axis=0)
    scale = F.std(axis=0)
    scale[scale == 0] = 1.0
    w, b = fit_l2_logistic((F - mean) / scale, labels, l2)
    return StackedModel(w, b, mean, scale, S.shape[1], list(names or []))


@dataclass(frozen=True)
class PlattCalibrator:
    a: float
    b: float
    capped: bool = False

    def __post_init__(self):
        if not np.isfinite(self.a) or not np.isfinite(self.b):
            raise ValueError("calibration parameters must be finite")

    def __call__(self, scores) -> np.ndarray:
        return expit(self.a * np.asarray(scores, dtype=np.float64) + self.b)

    def to_json(self) -> str:
        return json.dumps({"a": self.a, "b": self.b, "capped": self.capped})


def platt_calibrate(scores, labels) -> PlattCalibrator:
    """Maximum-likelihood ``(a, b)`` for ``P(y = 1 | s) = sigmoid(a s + b)``.

    ``|a|`` is bounded by 1e3; when the bound binds (separable data) the
    result is flagged with ``capped=True`` and a warning.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1, 1)
    y = np.asarray(labels).ravel().astype(bool)
    pos, neg = s[y, 0], s[~y, 0]
    if pos.size and neg.size and (pos.min() > neg.max() or pos.max() < neg.min()):
        # the likelihood keeps rising as |a| grows; gradients vanish long before the cap
        sign = 1.0 if pos.min() > neg.max() else -1.0
        mid = 0.5 * (max(pos.min(), neg.min()) + min(pos.max(), neg.max()))
        a, b = sign * PLATT_CAP, -sign * PLATT_CAP * mid
    else:
        bounds = [(-PLATT_CAP, PLATT_CAP), (None, None)]
        w, b = fit_l2_logistic(s, labels, 0.0, bounds=bounds)
        a = float(w[0])
    capped = abs(a) >= PLATT_CAP * (1 - 1e-9)
    if capped:
        warnings.warn("Platt slope hit its cap; scores separate the labels", RuntimeWarning,
                      stacklevel=2)
    return PlattCalibrator(a, b, capped)
