"""Per-example losses: log, squared (both on sigmoid probabilities) and margin ranking."""
import math
import warnings

EPS = 1e-12


def log_loss(p: float, y: int) -> float:
    """``-log Ber(y | p)``; ``p`` is clamped to ``[1e-12, 1 - 1e-12]`` with a warning."""
    if p <= 0.0 or p >= 1.0:
        warnings.warn(f"probability {p} clamped for log loss", RuntimeWarning, stacklevel=2)
    p = min(max(p, EPS), 1.0 - EPS)
    return -math.log(p) if y == 1 else -math.log(1.0 - p)


def squared_loss(p: float, y: int) -> float:
    return (p - y) ** 2


def margin_loss(f_pos: float, f_neg: float, margin: float = 1.0) -> float:
    if margin <= 0:
        raise ValueError("margin must be positive")
    return max(margin + f_neg - f_pos, 0.0)


def loss_value(kind: str, *args, **kwargs) -> float:
    """Dispatch on ``kind`` in {"log", "squared", "margin"}."""
    table = {"log": log_loss, "squared": squared_loss, "margin": margin_loss}
    if kind not in table:
        raise ValueError(f"unknown loss {kind!r}")
    return table[kind](*args, **kwargs)
