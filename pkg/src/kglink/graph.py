"""In-memory knowledge graph: dictionaries, triples and per-relation adjacency.

A :class:`KnowledgeGraph` is built once and never mutated. Entities and
relations get dense integer ids in order of first appearance, and each
relation ``k`` owns a sparse boolean ``N_e x N_e`` slice ``Y_k`` whose
nonzeros are exactly the positive triples of that relation.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

FORMAT_VERSION = 1

_NTRIPLE = re.compile(r"^<([^>]*)>\s+<([^>]*)>\s+<([^>]*)>\s*\.\s*$")


class ParseError(ValueError):
    """Malformed triple input; ``lineno`` is 1-based."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class Triple(NamedTuple):
    subject: int
    relation: int
    object: int


class KnowledgeGraph:
    """Immutable multi-relational graph over dense entity/relation ids.

    Parameters
    ----------
    entities, relations : sequence of str
        Names; position is the id.
    triples : iterable of (s, r, o) integer triples
        Duplicates are dropped, keeping first occurrence order.
    """

    def __init__(self, entities: Sequence[str], relations: Sequence[str], triples=()):
        self._entities = tuple(entities)
        self._relations = tuple(relations)
        self._entity_index = {name: i for i, name in enumerate(self._entities)}
        self._relation_index = {name: k for k, name in enumerate(self._relations)}
        if len(self._entity_index) != len(self._entities):
            raise ValueError("duplicate entity name")
        if len(self._relation_index) != len(self._relations):
            raise ValueError("duplicate relation name")

        ne, nr = len(self._entities), len(self._relations)
        seen = {}
        for t in triples:
            s, r, o = (int(x) for x in t)
            if not (0 <= s < ne and 0 <= o < ne and 0 <= r < nr):
                raise IndexError(f"triple {(s, r, o)} outside dictionary bounds")
            seen.setdefault((s, r, o), None)
        self._positives = frozenset(seen)
        arr = np.array(list(seen), dtype=np.int64).reshape(-1, 3)
        arr.setflags(write=False)
        self._triples = arr
        keys = np.sort(self.encode(arr))
        keys.setflags(write=False)
        self._keys = keys

        slices = []
        for k in range(nr):
            sel = arr[arr[:, 1] == k]
            m = sp.csr_matrix(
                (np.ones(len(sel), dtype=bool), (sel[:, 0], sel[:, 2])), shape=(ne, ne)
            )
            m.sort_indices()
            for a in (m.data, m.indices, m.indptr):
                a.setflags(write=False)
            slices.append(m)
        self._slices = tuple(slices)
        self._inverse = [None] * nr

    # dictionaries -----------------------------------------------------
    @property
    def entities(self) -> tuple[str, ...]:
        return self._entities

    @property
    def relations(self) -> tuple[str, ...]:
        return self._relations

    @property
    def num_entities(self) -> int:
        return len(self._entities)

    @property
    def num_relations(self) -> int:
        return len(self._relations)

    def entity_id(self, name: str) -> int:
        return self._entity_index[name]

    def relation_id(self, name: str) -> int:
        return self._relation_index[name]

    def triple(self, s: str, r: str, o: str) -> Triple:
        """Look up a triple by names."""
        return Triple(self.entity_id(s), self.relation_id(r), self.entity_id(o))

    def names(self, t) -> tuple[str, str, str]:
        s, r, o = t
        return self._entities[s], self._relations[r], self._entities[o]

    # triples ----------------------------------------------------------
    @property
    def positives(self) -> frozenset:
        return self._positives

    @property
    def triples(self) -> np.ndarray:
        """``(n, 3)`` read-only int64 array in insertion order."""
        return self._triples

    def __len__(self) -> int:
        return len(self._triples)

    def __contains__(self, t) -> bool:
        return tuple(int(x) for x in t) in self._positives

    def encode(self, triples) -> np.ndarray:
        """Map triples to unique int64 keys (used for vectorized membership)."""
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        ne, nr = max(self.num_entities, 1), max(self.num_relations, 1)
        return (triples[:, 0] * nr + triples[:, 1]) * ne + triples[:, 2]

    def contains_many(self, triples) -> np.ndarray:
        """Boolean mask: which rows of ``triples`` are positives."""
        keys = self.encode(triples)
        if len(self._keys) == 0:
            return np.zeros(len(keys), dtype=bool)
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self._keys) - 1)
        return self._keys[pos] == keys

    def with_triples(self, triples) -> "KnowledgeGraph":
        """Graph sharing these dictionaries but holding ``triples`` instead."""
        return KnowledgeGraph(self._entities, self._relations, triples)

    # adjacency --------------------------------------------------------
    def relation_slice(self, k: int) -> sp.csr_matrix:
        """Boolean CSR slice ``Y_k``; ``Y_k[i, j]`` is set iff ``(i, k, j)`` holds."""
        if not 0 <= k < self.num_relations:
            raise IndexError(f"relation id {k} out of range [0, {self.num_relations})")
        return self._slices[k]

    def _inverse_slice(self, k: int) -> sp.csr_matrix:
        if self._inverse[k] is None:
            m = self._slices[k].T.tocsr()
            m.sort_indices()
            self._inverse[k] = m
        return self._inverse[k]

    def out_neighbors(self, i: int, k: int, direction: str = "forward") -> set[int]:
        """Entities reached from ``i`` along relation ``k``.

        ``forward`` gives ``{j : (i, k, j)}``; ``inverse`` gives ``{j : (j, k, i)}``.
        """
        return set(self.neighbor_array(i, k, direction).tolist())

    def neighbor_array(self, i: int, k: int, direction: str = "forward") -> np.ndarray:
        if direction not in ("forward", "inverse"):
            raise ValueError(f"unknown direction {direction!r}")
        m = self.adjacency(k, direction)
        return m.indices[m.indptr[i]:m.indptr[i + 1]]

    def adjacency(self, k: int, direction: str = "forward") -> sp.csr_matrix:
        """Forward slice ``Y_k`` or its transpose for ``inverse``."""
        m = self.relation_slice(k)
        return m if direction == "forward" else self._inverse_slice(k)


# ingestion --------------------------------------------------------------

def ingest_triples(lines: Iterable[Sequence[str]]) -> KnowledgeGraph:
    """Build a graph from ``(subject, predicate, object)`` string triples.

    Ids are assigned in first-appearance order, subject before object.
    Repeated triples collapse to one.

    Raises
    ------
    ParseError
        If a row does not have exactly three non-empty fields.
    """
    entities: dict[str, int] = {}
    relations: dict[str, int] = {}
    triples = []
    for lineno, row in enumerate(lines, start=1):
        row = tuple(row)
        if len(row) != 3:
            raise ParseError(lineno, f"expected 3 fields, got {len(row)}")
        if any(not isinstance(f, str) or not f for f in row):
            raise ParseError(lineno, "empty field")
        s, p, o = row
        si = entities.setdefault(s, len(entities))
        pi = relations.setdefault(p, len(relations))
        oi = entities.setdefault(o, len(entities))
        triples.append((si, pi, oi))
    return KnowledgeGraph(list(entities), list(relations), triples)


def parse_triple_lines(text_lines: Iterable[str]):
    """Yield ``(lineno, (s, p, o))`` from TSV or N-Triples text lines.

    Blank lines and ``#`` comments are skipped. N-Triples IRIs are kept
    verbatim without the enclosing angle brackets.
    """
    for lineno, raw in enumerate(text_lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        m = _NTRIPLE.match(line.strip())
        if m:
            yield lineno, m.groups()
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(lineno, f"expected 3 tab-separated fields, got {len(fields)}")
        if any(not f for f in fields):
            raise ParseError(lineno, "empty field")
        yield lineno, tuple(fields)


def read_triples(path) -> KnowledgeGraph:
    return ingest_triples(read_triple_names(path))


def read_triple_names(path) -> list[tuple[str, str, str]]:
    with open(path, encoding="utf-8") as fh:
        return [row for _, row in parse_triple_lines(fh)]


def triples_to_tsv(kg: KnowledgeGraph, triples=None) -> str:
    rows = kg.triples if triples is None else triples
    return "".join("\t".join(kg.names(t)) + "\n" for t in rows)


def write_triples(path, kg: KnowledgeGraph, triples=None) -> None:
    Path(path).write_text(triples_to_tsv(kg, triples), encoding="utf-8")


def save_graph(path, kg: KnowledgeGraph) -> None:
    """Binary graph file (``.npz``) with a versioned JSON header."""
    header = json.dumps({"format": "kglink-graph", "version": FORMAT_VERSION})
    with open(path, "wb") as fh:
        np.savez(
            fh,
            header=np.array(header),
            entities=np.array(kg.entities, dtype=object).astype(str),
            relations=np.array(kg.relations, dtype=object).astype(str),
            triples=np.ascontiguousarray(kg.triples, dtype="<i8"),
        )


def load_graph(path) -> KnowledgeGraph:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != "kglink-graph":
            raise ValueError(f"{path}: not a graph file")
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported graph version {header.get('version')}")
        return KnowledgeGraph(
            [str(x) for x in z["entities"]], [str(x) for x in z["relations"]], z["triples"]
        )


# splits -----------------------------------------------------------------

def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n_valid = math.floor(n * ratios[1] + 1e-9)
    n_test = math.floor(n * ratios[2] + 1e-9)
    n_train = n - n_valid - n_test
    if n >= 3 and min(n_train, n_valid, n_test) == 0:
        raise ValueError(f"ratios {tuple(ratios)} leave a partition empty for {n} triples")
    return n_train, n_valid, n_test


def holdout_split(kg: KnowledgeGraph, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Partition the positives into disjoint train/valid/test triple arrays.

    Valid and test get ``floor(n * ratio)`` triples each, train the rest,
    after a seeded permutation.
    """
    n_train, n_valid, _ = split_sizes(len(kg), ratios)
    perm = np.random.default_rng(seed).permutation(len(kg))
    shuffled = kg.triples[perm]
    return (
        shuffled[:n_train].copy(),
        shuffled[n_train:n_train + n_valid].copy(),
        shuffled[n_train + n_valid:].copy(),
    )


def write_split(directory, kg: KnowledgeGraph, parts, ratios, seed) -> dict:
    """Write ``train/valid/test.tsv`` plus ``split.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = ("train", "valid", "test")
    for name, part in zip(names, parts):
        write_triples(directory / f"{name}.tsv", kg, part)
    meta = {
        "format": "kglink-split",
        "version": FORMAT_VERSION,
        "seed": int(seed),
        "ratios": [float(r) for r in ratios],
        "sizes": {name: int(len(p)) for name, p in zip(names, parts)},
    }
    (directory / "split.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def read_split(directory, kg: KnowledgeGraph):
    """Read a split written by :func:`write_split` against ``kg``'s dictionaries."""
    directory = Path(directory)
    meta = json.loads((directory / "split.json").read_text())
    parts = []
    for name in ("train", "valid", "test"):
        rows = read_triple_names(directory / f"{name}.tsv")
        arr = np.array([kg.triple(*r) for r in rows], dtype=np.int64).reshape(-1, 3)
        parts.append(arr)
    return tuple(parts), meta


# type constraints -------------------------------------------------------

@dataclass(frozen=True)
class TypeConstraints:
    """Admissible subject and object entity ids per relation."""

    subjects: tuple[np.ndarray, ...]
    objects: tuple[np.ndarray, ...]

    @classmethod
    def from_sets(cls, subjects, objects) -> "TypeConstraints":
        def norm(sets):
            out = []
            for s in sets:
                a = np.array(sorted(int(x) for x in s), dtype=np.int64)
                a.setflags(write=False)
                out.append(a)
            return tuple(out)

        return cls(norm(subjects), norm(objects))

    @classmethod
    def unconstrained(cls, num_entities: int, num_relations: int) -> "TypeConstraints":
        everyone = [range(num_entities)] * num_relations
        return cls.from_sets(everyone, everyone)

    def subject_set(self, k: int) -> set[int]:
        return set(self.subjects[k].tolist())

    def object_set(self, k: int) -> set[int]:
        return set(self.objects[k].tolist())

    def candidates(self, k: int, side: str) -> np.ndarray:
        return self.subjects[k] if side == "subject" else self.objects[k]

    def admissible(self, t) -> bool:
        s, k, o = (int(x) for x in t)
        sub, obj = self.subjects[k], self.objects[k]
        i = np.searchsorted(sub, s)
        j = np.searchsorted(obj, o)
        return bool(i < len(sub) and sub[i] == s and j < len(obj) and obj[j] == o)

    def admissible_many(self, triples) -> np.ndarray:
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        return np.fromiter((self.admissible(t) for t in triples), dtype=bool, count=len(triples))


def infer_type_constraints(kg: KnowledgeGraph) -> TypeConstraints:
    """Observed subjects/objects of each relation as its admissible sets."""
    subjects, objects = [], []
    for k in range(kg.num_relations):
        sel = kg.triples[kg.triples[:, 1] == k]
        subjects.append(np.unique(sel[:, 0]))
        objects.append(np.unique(sel[:, 2]))
    return TypeConstraints.from_sets(subjects, objects)
