"""Negative triples under the closed-world, perturbation and local closed-world regimes.

Nothing here ever returns a triple that is in the graph's positive set, and
every candidate is checked against the supplied type constraints.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .graph import KnowledgeGraph, Triple, TypeConstraints

PROVENANCES = ("observed", "cwa", "perturbed-subject", "perturbed-object", "lcwa")
MAX_RETRIES = 64


class LabeledTriple(NamedTuple):
    triple: Triple
    label: int
    provenance: str


@dataclass(frozen=True)
class LabeledTripleSet:
    items: tuple

    def __post_init__(self):
        pos = {tuple(x.triple) for x in self.items if x.label == 1}
        neg = {tuple(x.triple) for x in self.items if x.label == 0}
        for x in self.items:
            if (x.label == 1) != (x.provenance == "observed"):
                raise ValueError(f"label/provenance mismatch for {x}")
        if pos & neg:
            raise ValueError("a triple is labeled both positive and negative")

    @property
    def positives(self) -> list:
        return [x.triple for x in self.items if x.label == 1]

    @property
    def negatives(self) -> list:
        return [x.triple for x in self.items if x.label == 0]

    def arrays(self):
        """``(triples, labels)`` as int64 arrays."""
        t = np.array([tuple(x.triple) for x in self.items], dtype=np.int64).reshape(-1, 3)
        y = np.array([x.label for x in self.items], dtype=np.int64)
        return t, y

    def __len__(self):
        return len(self.items)


def triple_stream(seed: int, t) -> np.random.Generator:
    """Independent RNG stream for one source triple."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), *(int(x) for x in t)]))


def _corruptions(kg, t, side, constraints, count, rng):
    s, k, o = (int(x) for x in t)
    pool = constraints.candidates(k, side)
    current = s if side == "subject" else o
    found: list[int] = []
    taken = {current}

    def ok(e):
        cand = (e, k, o) if side == "subject" else (s, k, e)
        return cand not in kg.positives

    for _ in range(MAX_RETRIES):
        if len(found) == count or len(pool) == 0:
            break
        e = int(pool[rng.integers(len(pool))])
        if e in taken:
            continue
        taken.add(e)
        if ok(e):
            found.append(e)
    if len(found) < count:
        # small or crowded pool: enumerate what is left and sample from it
        rest = [int(e) for e in pool if int(e) not in taken and ok(int(e))]
        need = min(count - len(found), len(rest))
        if need:
            found.extend(int(x) for x in rng.choice(rest, size=need, replace=False))
    if side == "subject":
        return [Triple(e, k, o) for e in found]
    return [Triple(s, k, e) for e in found]


def perturb_negatives(kg: KnowledgeGraph, t, per_side: int = 1,
                      constraints: TypeConstraints | None = None, seed: int = 0,
                      sides: Sequence[str] = ("subject", "object")) -> list:
    """Corrupt the subject and/or object of a positive triple.

    Returns up to ``per_side`` distinct negatives per side; fewer when the
    admissible pool runs out. The RNG stream is derived from
    ``(seed, triple)`` so results do not depend on call order.
    """
    t = Triple(*(int(x) for x in t))
    if t not in kg.positives:
        raise ValueError(f"{t} is not a positive triple")
    if constraints is None:
        constraints = TypeConstraints.unconstrained(kg.num_entities, kg.num_relations)
    rng = triple_stream(seed, t)
    out = []
    for side in sides:
        tag = "perturbed-subject" if side == "subject" else "perturbed-object"
        out.extend(LabeledTriple(c, 0, tag) for c in _corruptions(kg, t, side, constraints, per_side, rng))
    return out


def lcwa_negatives(kg: KnowledgeGraph, i: int, k: int,
                   constraints: TypeConstraints | None = None) -> list:
    """All admissible ``(i, k, j)`` not in the graph, provided ``(i, k, .)`` was observed."""
    observed = kg.neighbor_array(i, k, "forward")
    if len(observed) == 0:
        return []
    if constraints is None:
        constraints = TypeConstraints.unconstrained(kg.num_entities, kg.num_relations)
    if not np.isin(i, constraints.subjects[k]):
        return []
    objs = constraints.objects[k]
    keep = objs[~np.isin(objs, observed)]
    return [Triple(int(i), int(k), int(j)) for j in keep]


def cwa_negatives(kg: KnowledgeGraph, constraints: TypeConstraints | None = None,
                  cap: int = 100, seed: int = 0) -> list:
    """Uniform sample, without replacement, of admissible triples absent from the graph."""
    if cap < 0:
        raise ValueError("cap must be >= 0")
    if constraints is None:
        constraints = TypeConstraints.unconstrained(kg.num_entities, kg.num_relations)
    if cap == 0:
        return []
    sizes = np.array([len(constraints.subjects[k]) * len(constraints.objects[k])
                      for k in range(kg.num_relations)], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    universe = int(offsets[-1])
    if universe == 0:
        return []
    admissible_pos = int(sum(constraints.admissible(t) for t in kg.triples))
    draw = min(universe, cap + admissible_pos)
    rng = np.random.default_rng(seed)
    idx = rng.choice(universe, size=draw, replace=False)
    k = np.searchsorted(offsets, idx, side="right") - 1
    local = idx - offsets[k]
    out = []
    for kk, loc in zip(k.tolist(), local.tolist()):
        nobj = len(constraints.objects[kk])
        s = int(constraints.subjects[kk][loc // nobj])
        o = int(constraints.objects[kk][loc % nobj])
        t = Triple(s, kk, o)
        if t not in kg.positives:
            out.append(t)
            if len(out) == cap:
                break
    return out


def build_training_set(kg: KnowledgeGraph, regime: str = "perturb",
                       constraints: TypeConstraints | None = None, seed: int = 0,
                       per_side: int = 1, cap: int | None = None) -> LabeledTripleSet:
    """Positives of ``kg`` plus negatives from one regime."""
    if constraints is None:
        constraints = TypeConstraints.unconstrained(kg.num_entities, kg.num_relations)
    items = [LabeledTriple(Triple(*map(int, t)), 1, "observed") for t in kg.triples]
    negatives: dict = {}
    if regime == "perturb":
        for t in kg.triples:
            for x in perturb_negatives(kg, t, per_side, constraints, seed):
                negatives.setdefault(x.triple, x)
    elif regime == "lcwa":
        pairs = dict.fromkeys((int(s), int(r)) for s, r, _ in kg.triples)
        for s, r in pairs:
            for t in lcwa_negatives(kg, s, r, constraints):
                negatives.setdefault(t, LabeledTriple(t, 0, "lcwa"))
    elif regime == "cwa":
        n = len(kg) * 2 * per_side if cap is None else cap
        for t in cwa_negatives(kg, constraints, n, seed):
            negatives[t] = LabeledTriple(t, 0, "cwa")
    else:
        raise ValueError(f"unknown negative regime {regime!r}")
    return LabeledTripleSet(tuple(items) + tuple(negatives.values()))


def labeled_to_tsv(kg: KnowledgeGraph, items) -> str:
    """TSV rows ``subject, predicate, object, label, provenance``."""
    lines = []
    for x in items:
        s, r, o = kg.names(x.triple)
        lines.append(f"{s}\t{r}\t{o}\t{x.label}\t{x.provenance}\n")
    return "".join(lines)


class EpochSampler:
    """Draws one negative per positive for SGD epochs.

    ``regime`` is ``perturb`` (random side, admissible replacement), ``lcwa``
    (replacement object for an observed subject/relation pair) or ``cwa``
    (any admissible absent triple). Negatives are checked against
    ``known`` (defaults to ``kg``), which may be a larger graph so that
    held-out positives are never used as negatives.
    """

    def __init__(self, kg: KnowledgeGraph, regime: str = "perturb",
                 constraints: TypeConstraints | None = None,
                 known: KnowledgeGraph | None = None):
        if regime not in ("perturb", "lcwa", "cwa"):
            raise ValueError(f"unknown negative regime {regime!r}")
        self.kg = kg
        self.regime = regime
        self.constraints = constraints or TypeConstraints.unconstrained(kg.num_entities, kg.num_relations)
        self.known = known or kg

    def _draw_one(self, t, rng):
        s, k, o = (int(x) for x in t)
        C = self.constraints
        for _ in range(MAX_RETRIES):
            if self.regime == "perturb":
                side = "subject" if rng.random() < 0.5 else "object"
            elif self.regime == "lcwa":
                side = "object"
            else:
                side = None
            if side is None:
                kk = int(rng.integers(self.kg.num_relations))
                subs, objs = C.subjects[kk], C.objects[kk]
                if len(subs) == 0 or len(objs) == 0:
                    continue
                cand = (int(subs[rng.integers(len(subs))]), kk, int(objs[rng.integers(len(objs))]))
            else:
                pool = C.candidates(k, side)
                if len(pool) == 0:
                    continue
                e = int(pool[rng.integers(len(pool))])
                cand = (e, k, o) if side == "subject" else (s, k, e)
            if cand != (s, k, o) and cand not in self.known.positives:
                return cand
        # crowded pool: deterministic enumeration
        if self.regime == "cwa":
            found = cwa_negatives(self.known, C, 1, int(rng.integers(2**31)))
            return tuple(found[0]) if found else None
        sides = ("subject", "object") if self.regime == "perturb" else ("object",)
        options = []
        for side in sides:
            for e in C.candidates(k, side):
                cand = (int(e), k, o) if side == "subject" else (s, k, int(e))
                if cand != (s, k, o) and cand not in self.known.positives:
                    options.append(cand)
        if not options:
            return None
        return options[int(rng.integers(len(options)))]

    def draw(self, positives, rng: np.random.Generator):
        """Return ``(positives_kept, negatives)`` arrays, one negative per kept positive."""
        keep, negs = [], []
        for t in np.asarray(positives, dtype=np.int64).reshape(-1, 3):
            c = self._draw_one(t, rng)
            if c is not None:
                keep.append(t)
                negs.append(c)
        return (np.array(keep, dtype=np.int64).reshape(-1, 3),
                np.array(negs, dtype=np.int64).reshape(-1, 3))
