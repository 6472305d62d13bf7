"""Loss terms: hard CE on the confident subset, soft CE on the unlabeled
subset, and their weighted combination.

Both losses are batch means so the trade-off weight keeps its meaning across
batch sizes, and both return the analytic gradient on the logits. Soft-label
rows need not sum to 1 (their mass is deliberately below 1); a never-updated
instance (q = 0) contributes zero loss and zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkit import one_hot

# probabilities are clamped here before the log so the loss stays bounded
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class LossReport:
    loss_l: float
    loss_u: float
    total: float
    lam: float


def labeled_ce(probs: np.ndarray, pseudo_labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean -log p(label) over the batch, plus the gradient on the logits.

    probs rows must be softmax outputs aligned with the labels; the gradient
    is (probs - onehot) / batch_size.
    """
    p = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(pseudo_labels, dtype=np.int64)
    if p.shape[0] == 0:
        raise ValueError("empty batch")
    if labels.shape != (p.shape[0],):
        raise ValueError("labels must align with probability rows")
    picked = np.clip(p[np.arange(p.shape[0]), labels], PROB_CLAMP, None)
    loss = float(-np.log(picked).mean())
    grad = (p - one_hot(labels, p.shape[1])) / p.shape[0]
    return loss, grad


def soft_ce(probs: np.ndarray, q_batch: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of sum_y -q_y log p_y over the batch, plus the gradient on logits.

    The gradient per row is (|q|_1 * probs - q) / batch_size; rows with zero
    mass are inert. q rows must be non-negative but need not sum to 1.
    """
    p = np.asarray(probs, dtype=np.float64)
    q = np.asarray(q_batch, dtype=np.float64)
    if p.shape[0] == 0:
        raise ValueError("empty batch")
    if q.shape != p.shape:
        raise ValueError("soft labels must align with probability rows")
    if (q < 0).any():
        raise ValueError("corrupt soft label (negative entry)")
    logp = np.log(np.clip(p, PROB_CLAMP, None))
    loss = float(-(q * logp).sum(axis=1).mean())
    grad = (q.sum(axis=1, keepdims=True) * p - q) / p.shape[0]
    return loss, grad


def total_loss(loss_u: float, loss_l: float, lam: float) -> LossReport:
    """Combined objective: loss_u + lam * loss_l (the trade-off weight sits on
    the labeled term)."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return LossReport(loss_l=loss_l, loss_u=loss_u, total=loss_u + lam * loss_l, lam=lam)
