"""Similarity indices for a single relation viewed as a graph.

Local: common neighbors, Adamic-Adar, preferential attachment.
Path-based: Katz (summed to convergence) and local Katz (truncated at a
fixed length). Graphs are symmetrized unless ``directed=True``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigs

KATZ_TOL = 1e-12
KATZ_MAX_TERMS = 10_000


@dataclass(frozen=True)
class SimilarityKind:
    name: str
    beta: float = 0.0
    length: int = 0

    def __post_init__(self):
        names = ("common-neighbors", "adamic-adar", "preferential-attachment", "katz", "local-katz")
        if self.name not in names:
            raise ValueError(f"unknown similarity {self.name!r}")
        if self.name in ("katz", "local-katz") and self.beta <= 0:
            raise ValueError("katz needs beta > 0")
        if self.name == "local-katz" and self.length < 1:
            raise ValueError("local-katz needs length >= 1")


def _adjacency(graph, directed: bool) -> sp.csr_matrix:
    A = sp.csr_matrix(graph, dtype=np.float64)
    A.data[:] = 1.0
    if not directed:
        A = A.maximum(A.T).tocsr()
    A.eliminate_zeros()
    return A


def spectral_radius(A) -> float:
    A = sp.csr_matrix(A, dtype=np.float64)
    n = A.shape[0]
    if A.nnz == 0:
        return 0.0
    if n <= 64:
        return float(np.max(np.abs(np.linalg.eigvals(A.toarray()))))
    return float(np.abs(eigs(A, k=1, which="LM", return_eigenvectors=False)[0]))


def _neighbors(A, i):
    return set(A.indices[A.indptr[i]:A.indptr[i + 1]].tolist())


def katz_series(A, i: int, beta: float, length: int | None = None) -> np.ndarray:
    """Row ``i`` of ``sum_l beta^l A^l`` for ``l >= 1``.

    Truncated after ``length`` terms, or once a term drops below 1e-12
    when ``length`` is None.
    """
    x = np.zeros(A.shape[0])
    x[i] = 1.0
    total = np.zeros_like(x)
    AT = A.T.tocsr()
    limit = length if length is not None else KATZ_MAX_TERMS
    for _ in range(limit):
        x = beta * (AT @ x)
        total += x
        if length is None and np.max(np.abs(x)) < KATZ_TOL:
            break
    else:
        if length is None:
            raise RuntimeError("katz series did not converge")
    return total


def similarity(graph, i: int, j: int, kind, directed: bool = False) -> float:
    """Similarity of nodes ``i`` and ``j``.

    Parameters
    ----------
    graph : sparse or dense square matrix
        Adjacency of one relation (e.g. ``kg.relation_slice(k)``).
    kind : SimilarityKind or str
        A bare string works for the parameter-free indices.
    directed : bool
        Keep edge direction (paths follow edges) instead of symmetrizing.
    """
    if isinstance(kind, str):
        kind = SimilarityKind(kind)
    A = _adjacency(graph, directed)
    if kind.name == "common-neighbors":
        return float(len(_neighbors(A, i) & _neighbors(A, j)))
    if kind.name == "preferential-attachment":
        return float(len(_neighbors(A, i)) * len(_neighbors(A, j)))
    if kind.name == "adamic-adar":
        deg = np.diff(A.indptr)
        total = 0.0
        for z in sorted(_neighbors(A, i) & _neighbors(A, j)):
            if deg[z] <= 1:
                warnings.warn(f"common neighbor {z} has degree 1; its Adamic-Adar term is 0",
                              RuntimeWarning, stacklevel=2)
                continue
            total += 1.0 / math.log(deg[z])
        return total
    if kind.name == "katz":
        rho = spectral_radius(A)
        if rho > 0 and kind.beta >= 1.0 / rho:
            raise ValueError(f"katz diverges: beta={kind.beta} >= 1/spectral radius={1.0 / rho:.6g}")
        return float(katz_series(A, i, kind.beta)[j])
    return float(katz_series(A, i, kind.beta, kind.length)[j])


def katz_exact(graph, beta: float, directed: bool = False) -> np.ndarray:
    """Closed form ``(I - beta A)^-1 - I`` (dense; for small graphs and checks)."""
    A = _adjacency(graph, directed).toarray()
    n = A.shape[0]
    return np.linalg.inv(np.eye(n) - beta * A) - np.eye(n)
