"""Small logistic-regression solvers shared by PRA, ARE, stacking and Platt scaling."""
from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit


def mean_log_loss(z, y) -> float:
    """Mean of ``-log Ber(y | sigmoid(z))``, computed stably."""
    z = np.asarray(z, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def _check_labels(y):
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValueError("no training examples")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    if y.min() == y.max():
        raise ValueError("logistic fit needs both classes")
    return y


def fit_l1_logistic(X, y, l1: float, tol: float = 1e-8, max_iter: int = 50_000,
                    offset=None, w0=None, b0=None):
    """Minimize ``mean log-loss(X w + b + offset, y) + l1 * ||w||_1``.

    Monotone accelerated proximal gradient with the fixed step ``1/L``,
    ``L = sigma_max([X, 1])^2 / (4 n)``. Stops when an accepted step lowers the
    objective by less than ``tol``. The intercept is unpenalized.

    Returns ``(w, b, objective_trace)``; the trace is non-increasing.
    """
    X = np.asarray(X, dtype=np.float64)
    y = _check_labels(y)
    n, d = X.shape
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=np.float64)
    Xa = np.hstack([X, np.ones((n, 1))])
    L = max(np.linalg.norm(Xa, 2) ** 2 / (4.0 * n), 1e-12)
    step = 1.0 / L

    def objective(theta):
        return mean_log_loss(Xa @ theta + off, y) + l1 * np.abs(theta[:d]).sum()

    def prox_grad(theta):
        g = Xa.T @ (expit(Xa @ theta + off) - y) / n
        z = theta - step * g
        z[:d] = np.sign(z[:d]) * np.maximum(np.abs(z[:d]) - step * l1, 0.0)
        return z

    x = np.zeros(d + 1)
    if w0 is not None:
        x[:d] = w0
    if b0 is not None:
        x[d] = b0
    fx = objective(x)
    trace = [fx]
    yk, t = x.copy(), 1.0
    for _ in range(max_iter):
        z = prox_grad(yk)
        fz = objective(z)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        accepted = fz <= fx
        x_new, f_new = (z, fz) if accepted else (x, fx)
        yk = x_new + (t / t_new) * (z - x_new) + ((t - 1.0) / t_new) * (x_new - x)
        drop = fx - f_new
        x, fx, t = x_new, f_new, t_new
        trace.append(fx)
        if accepted and drop < tol:
            break
        if not accepted:
            # restart momentum so the next step is a plain proximal step from x
            yk, t = x.copy(), 1.0
    return x[:d].copy(), float(x[d]), trace


def fit_l2_logistic(X, y, l2: float = 0.0, offset=None, bounds=None):
    """Ridge logistic regression (intercept unpenalized) by L-BFGS-B.

    ``bounds`` is an optional list of ``(low, high)`` per weight followed by
    the intercept. Returns ``(w, b)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = _check_labels(y)
    n, d = X.shape
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=np.float64)

    def fun(theta):
        z = X @ theta[:d] + theta[d] + off
        p = expit(z)
        value = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * theta[:d] @ theta[:d]
        r = (p - y) / n
        grad = np.r_[X.T @ r + l2 * theta[:d], r.sum()]
        return value, grad

    res = minimize(fun, np.zeros(d + 1), jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-10})
    return res.x[:d].copy(), float(res.x[d])
