"""Segmentation losses with analytic gradients, and a reduce-on-plateau
learning-rate state machine.

Probabilities are clamped to ``[EPS, 1 - EPS]`` before use; gradients are
taken with respect to the unclamped input (zero where the clamp is active).
"""

from dataclasses import dataclass, replace

import numpy as np

EPS = 1e-7


def _prep(p, y):
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"prediction shape {p.shape} != target shape {y.shape}")
    return np.clip(p, EPS, 1 - EPS), y, ((p >= EPS) & (p <= 1 - EPS)).astype(np.float64)


def bce(p, y):
    p, y, _ = _prep(p, y)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def soft_dice_loss(p, y, smooth=1.0):
    p, y, _ = _prep(p, y)
    inter = np.sum(p * y)
    return float(1 - (2 * inter + smooth) / (p.sum() + y.sum() + smooth))


def focal_loss(p, y, gamma=2.0):
    if gamma < 0:
        raise ValueError("focal gamma must be >= 0")
    p, y, _ = _prep(p, y)
    pos = y * (1 - p) ** gamma * np.log(p)
    neg = (1 - y) * p**gamma * np.log(1 - p)
    return float(-np.mean(pos + neg))


def jaccard_loss(p, y, smooth=1.0):
    p, y, _ = _prep(p, y)
    inter = np.sum(p * y)
    union = p.sum() + y.sum() - inter
    return float(1 - (inter + smooth) / (union + smooth))


DEFAULT_WEIGHTS = {"bce": 1.0, "dice": 1.0, "focal": 1.0, "jaccard": 1.0}


def combined_loss(p, y, smooth=1.0, gamma=2.0, weights=None):
    """Weighted mean of the four losses (equal weights by default)."""
    w = DEFAULT_WEIGHTS if weights is None else weights
    parts = {
        "bce": bce(p, y),
        "dice": soft_dice_loss(p, y, smooth),
        "focal": focal_loss(p, y, gamma),
        "jaccard": jaccard_loss(p, y, smooth),
    }
    return sum(w[k] * parts[k] for k in parts) / sum(w.values())


def _bce_grad(p, y):
    return -(y / p - (1 - y) / (1 - p)) / p.size


def _dice_grad(p, y, smooth):
    inter = np.sum(p * y)
    denom = p.sum() + y.sum() + smooth
    return -(2 * y * denom - (2 * inter + smooth)) / denom**2


def _focal_grad(p, y, gamma):
    log_p, log_q = np.log(p), np.log(1 - p)
    q = 1 - p
    if gamma == 0:
        d_pos = 1 / p
        d_neg = -1 / q
    else:
        d_pos = -gamma * q ** (gamma - 1) * log_p + q**gamma / p
        d_neg = gamma * p ** (gamma - 1) * log_q - p**gamma / q
    return -(y * d_pos + (1 - y) * d_neg) / p.size


def _jaccard_grad(p, y, smooth):
    inter = np.sum(p * y)
    union = p.sum() + y.sum() - inter + smooth
    return -(y * union - (inter + smooth) * (1 - y)) / union**2


def loss_gradient(p, y, which="combined", smooth=1.0, gamma=2.0, weights=None):
    """Analytic d(loss)/dp, same shape as ``p``."""
    if which == "focal" or which == "combined":
        if gamma < 0:
            raise ValueError("focal gamma must be >= 0")
    pc, y, inside = _prep(p, y)
    grads = {
        "bce": lambda: _bce_grad(pc, y),
        "dice": lambda: _dice_grad(pc, y, smooth),
        "focal": lambda: _focal_grad(pc, y, gamma),
        "jaccard": lambda: _jaccard_grad(pc, y, smooth),
    }
    if which == "combined":
        w = DEFAULT_WEIGHTS if weights is None else weights
        g = sum(w[k] * grads[k]() for k in grads) / sum(w.values())
    elif which in grads:
        g = grads[which]()
    else:
        raise ValueError(f"unknown loss {which!r}")
    return g * inside


# --- learning-rate schedule ----------------------------------------------


@dataclass(frozen=True)
class LrPlateauState:
    current_lr: float = 1e-3
    best_metric: float = float("inf")
    epochs_since_improvement: int = 0
    patience: int = 3
    factor: float = 0.5
    min_delta: float = 1e-4

    def __post_init__(self):
        if not self.current_lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.factor < 1:
            raise ValueError("factor must be in (0, 1)")


def lr_plateau_step(state, metric):
    """Feed one epoch's monitored value (lower is better)."""
    if metric < state.best_metric - state.min_delta:
        return replace(state, best_metric=metric, epochs_since_improvement=0)
    bad = state.epochs_since_improvement + 1
    if bad > state.patience:
        return replace(state, current_lr=state.current_lr * state.factor, epochs_since_improvement=0)
    return replace(state, epochs_since_improvement=bad)
