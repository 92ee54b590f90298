"""Entity ranking (raw and filtered) and the evaluation report built on it."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..graph import KnowledgeGraph, TypeConstraints
from ..latent.models import LatentModel, score_many
from ..sampling import EpochSampler
from .metrics import auc_pr, auc_roc, hits_at, mrr


def as_scorer(model):
    """Callable mapping an ``(n, 3)`` triple array to scores."""
    if isinstance(model, LatentModel):
        return lambda triples: score_many(model, triples)
    if hasattr(model, "score_many"):
        return model.score_many
    if callable(model):
        return model
    raise TypeError(f"cannot score with {type(model).__name__}")


def _candidates(kg, t, side, constraints):
    s, k, o = (int(x) for x in t)
    if constraints is None:
        pool = np.arange(kg.num_entities)
    else:
        pool = constraints.candidates(k, side)
    truth = s if side == "subject" else o
    pool = pool[pool != truth]
    cands = np.empty((len(pool) + 1, 3), dtype=np.int64)
    cands[:] = (s, k, o)
    col = 0 if side == "subject" else 2
    cands[1:, col] = pool
    return cands


def rank_entities(model, kg: KnowledgeGraph, t, corrupt: str = "object",
                  filtered: bool = True, known: KnowledgeGraph | None = None,
                  constraints: TypeConstraints | None = None) -> float:
    """Rank of the true entity among its corruptions, best = 1, ties take the mid-rank.

    Parameters
    ----------
    corrupt : {"object", "subject"}
    filtered : bool
        Drop corruptions that are known positives (from ``known``, default ``kg``).
    constraints : TypeConstraints, optional
        Restrict candidates to admissible entities; all entities when omitted.
    """
    if corrupt not in ("object", "subject"):
        raise ValueError(f"corrupt must be 'object' or 'subject', got {corrupt!r}")
    cands = _candidates(kg, t, corrupt, constraints)
    if filtered:
        reference = known or kg
        drop = reference.contains_many(cands[1:])
        cands = np.concatenate([cands[:1], cands[1:][~drop]])
    scores = np.asarray(as_scorer(model)(cands), dtype=np.float64)
    true_score, others = scores[0], scores[1:]
    higher = np.count_nonzero(others > true_score)
    ties = np.count_nonzero(others == true_score)
    return 1.0 + higher + 0.5 * ties


@dataclass
class RankingReport:
    object_ranks: list
    subject_ranks: list
    auc_roc: float
    auc_pr: float
    mrr: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "auc_roc": self.auc_roc,
            "auc_pr": self.auc_pr,
            "mrr": self.mrr,
            "mrr_object": mrr(self.object_ranks) if self.object_ranks else None,
            "mrr_subject": mrr(self.subject_ranks) if self.subject_ranks else None,
            "hits_at_1": hits_at(self.object_ranks + self.subject_ranks, 1),
            "hits_at_10": hits_at(self.object_ranks + self.subject_ranks, 10),
            "num_test": len(self.object_ranks),
            **self.extra,
        }


def labeled_eval_set(test_triples, known: KnowledgeGraph, constraints=None, seed: int = 0):
    """Test positives plus one perturbation negative each, checked against ``known``."""
    rng = np.random.default_rng(seed)
    sampler = EpochSampler(known, "perturb", constraints, known=known)
    pos, neg = sampler.draw(test_triples, rng)
    triples = np.concatenate([np.asarray(test_triples, dtype=np.int64).reshape(-1, 3), neg])
    labels = np.r_[np.ones(len(test_triples), dtype=np.int64), np.zeros(len(neg), dtype=np.int64)]
    return triples, labels


def evaluate(model, test_triples, known: KnowledgeGraph, constraints=None,
             filtered: bool = True, seed: int = 0, both_sides: bool = True) -> RankingReport:
    """Filtered ranks of every test triple plus AUCs against perturbation negatives.

    ``known`` holds every true triple (train, valid and test) so that
    filtering and negative generation never treat a true fact as false.
    """
    test = np.asarray(test_triples, dtype=np.int64).reshape(-1, 3)
    scorer = as_scorer(model)
    obj = [rank_entities(scorer, known, t, "object", filtered, known, constraints) for t in test]
    sub = [rank_entities(scorer, known, t, "subject", filtered, known, constraints)
           for t in test] if both_sides else []
    triples, labels = labeled_eval_set(test, known, constraints, seed)
    scores = np.asarray(scorer(triples), dtype=np.float64)
    if labels.min() == labels.max():
        roc = pr = float("nan")
    else:
        roc, pr = auc_roc(scores, labels), auc_pr(scores, labels)
    return RankingReport(obj, sub, roc, pr, mrr(obj + sub))
