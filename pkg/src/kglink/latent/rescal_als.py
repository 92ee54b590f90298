"""RESCAL fitted by alternating least squares under the closed-world squared loss.

Minimizes ``sum_k ||Y_k - E W_k E^T||_F^2 + lambda_e ||E||_F^2 +
lambda_w sum_k ||W_k||_F^2``. Every quantity is computed from the sparse
slices and ``H_e x H_e`` Gram matrices, so one sweep is linear in the number
of observed triples and in ``N_e``.

The ``W_k`` step is the exact ridge minimizer given ``E`` (via the SVD of
``E``). The ``E`` step is the usual RESCAL fixed-point update, which is not a
guaranteed descent step for the quartic objective, so it is safeguarded by
step halving toward the previous ``E``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..graph import KnowledgeGraph
from .models import LatentModel, ModelConfig, init_model

log = logging.getLogger(__name__)

_MAX_HALVINGS = 30


@dataclass
class AlsTrace:
    losses: list = field(default_factory=list)
    half_steps: list = field(default_factory=list)
    pinv_fallback: bool = False
    backtracks: int = 0

    def to_dict(self) -> dict:
        return {
            "losses": [float(x) for x in self.losses],
            "half_steps": [(s, float(x)) for s, x in self.half_steps],
            "pinv_fallback": self.pinv_fallback,
            "backtracks": self.backtracks,
        }


def _slices(kg_or_slices):
    if isinstance(kg_or_slices, KnowledgeGraph):
        return [kg_or_slices.relation_slice(k).astype(np.float64)
                for k in range(kg_or_slices.num_relations)]
    return [s.astype(np.float64) if hasattr(s, "astype") else np.asarray(s, float)
            for s in kg_or_slices]


def als_objective(slices, E, W, lambda_e: float, lambda_w: float) -> float:
    """Regularized squared reconstruction error without densifying ``E W E^T``."""
    G = E.T @ E
    total = 0.0
    for k, Y in enumerate(slices):
        Wk = W[k]
        fit = np.sum(E * ((Y @ E) @ Wk.T))
        norm_sq = float(Y.multiply(Y).sum()) if hasattr(Y, "multiply") else float(np.sum(Y * Y))
        recon_sq = np.trace(Wk @ G @ Wk.T @ G)
        total += norm_sq - 2.0 * fit + recon_sq
    return float(total + lambda_e * np.sum(E * E) + lambda_w * np.sum(W * W))


def update_w(slices, E, lambda_w: float, trace: AlsTrace | None = None) -> np.ndarray:
    """Exact minimizer of the objective over every ``W_k`` for fixed ``E``."""
    U, S, Vt = np.linalg.svd(E, full_matrices=False)
    outer = np.outer(S, S)
    denom = outer ** 2 + lambda_w
    if lambda_w == 0.0:
        # pseudo-inverse: drop directions with (numerically) zero singular values
        smax = S.max() if S.size else 0.0
        singular = outer <= 1e-12 * smax * smax
        if singular.any():
            if trace is not None:
                trace.pinv_fallback = True
            denom = np.where(singular, 1.0, denom)
            outer = np.where(singular, 0.0, outer)
    factor = outer / denom
    h = E.shape[1]
    W = np.empty((len(slices), h, h))
    for k, Y in enumerate(slices):
        M = U.T @ (Y @ U)
        W[k] = Vt.T @ (factor * M) @ Vt
    return W


def _e_candidate(slices, E, W, lambda_e: float, trace: AlsTrace | None):
    h = E.shape[1]
    G = E.T @ E
    num = np.zeros_like(E)
    den = lambda_e * np.eye(h)
    for k, Y in enumerate(slices):
        Wk = W[k]
        num += Y @ (E @ Wk.T) + Y.T @ (E @ Wk)
        den += Wk @ G @ Wk.T + Wk.T @ G @ Wk
    try:
        if np.linalg.cond(den) > 1e13:
            raise np.linalg.LinAlgError
        return np.linalg.solve(den.T, num.T).T
    except np.linalg.LinAlgError:
        if trace is not None:
            trace.pinv_fallback = True
        return num @ np.linalg.pinv(den)


def update_e(slices, E, W, lambda_e: float, lambda_w: float, current: float,
             trace: AlsTrace | None = None):
    """Safeguarded ``E`` update; returns ``(E, objective)`` never above ``current``."""
    cand = _e_candidate(slices, E, W, lambda_e, trace)
    step = 1.0
    for _ in range(_MAX_HALVINGS):
        trial = E + step * (cand - E) if step < 1.0 else cand
        value = als_objective(slices, trial, W, lambda_e, lambda_w)
        if np.isfinite(value) and value <= current:
            return trial, value
        step *= 0.5
        if trace is not None:
            trace.backtracks += 1
    return E, current


def fit_rescal_als(kg, rank: int, lambda_e: float = 0.0, lambda_w: float = 0.0,
                   iters: int = 50, seed: int = 0, tol: float = 0.0,
                   init: LatentModel | None = None):
    """Fit RESCAL by ALS.

    Parameters
    ----------
    kg : KnowledgeGraph or sequence of (sparse) N_e x N_e slices
    rank : int
        Latent dimension H_e.
    lambda_e, lambda_w : float
        Ridge strengths on ``E`` and on every ``W_k``.
    iters : int
        Number of full sweeps (an E step followed by a W step).
    tol : float
        Stop early once a sweep improves the objective by less than
        ``tol`` times its current value.

    Returns
    -------
    model : LatentModel
    trace : AlsTrace
        ``losses[0]`` is the objective at initialization; ``half_steps``
        records the objective after every E and W update.
    """
    if rank < 1:
        raise ValueError("rank must be >= 1")
    slices = _slices(kg)
    if not slices:
        raise ValueError("need at least one relation")
    ne = slices[0].shape[0]
    if init is None:
        init = init_model(ModelConfig("rescal", rank), ne, len(slices), seed)
    model = init.copy()
    E, W = model.params["E"], model.params["W"]
    trace = AlsTrace()
    current = als_objective(slices, E, W, lambda_e, lambda_w)
    trace.losses.append(current)
    for it in range(iters):
        E, current = update_e(slices, E, W, lambda_e, lambda_w, current, trace)
        trace.half_steps.append(("E", current))
        W_new = update_w(slices, E, lambda_w, trace)
        value = als_objective(slices, E, W_new, lambda_e, lambda_w)
        if value <= current or not np.isfinite(current):
            W, current = W_new, value
        trace.half_steps.append(("W", current))
        previous = trace.losses[-1]
        trace.losses.append(current)
        log.debug("als iter %d objective %.6g", it, current)
        if tol > 0 and previous - current <= tol * max(abs(previous), 1e-300):
            break
    model.params["E"], model.params["W"] = E, W
    model.meta.update(als=trace.to_dict(), lambda_e=lambda_e, lambda_w=lambda_w)
    return model, trace
