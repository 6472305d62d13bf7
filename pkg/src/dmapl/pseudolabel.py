"""Dual moving-average machinery.

Two exponential moving averages drive the soft pseudo-labels of the unlabeled
subset: class centroids over L2-normalized bottleneck features (coefficient
alpha), and per-instance soft-label vectors built from one-hot prototypical
assignments (coefficient beta).

Per-instance update counters make the soft-label mass identity testable: after
t one-hot updates the L1 mass of an instance's soft label is exactly 1 - beta^t.
"""

from __future__ import annotations

import csv

import numpy as np

from .numkit import ZERO_NORM_EPS, one_hot


def class_feature_means(z_batch: np.ndarray, pseudo_labels: np.ndarray,
                        num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class mean of the (unit-norm) feature rows with that pseudo-label.

    Returns (means, present): means is (C, dim) with zero rows for classes
    absent from the batch, present is the (C,) bool mask of classes seen.
    """
    z = np.asarray(z_batch, dtype=np.float64)
    labels = np.asarray(pseudo_labels, dtype=np.int64)
    if labels.shape != (z.shape[0],):
        raise ValueError("pseudo_labels must align with z_batch rows")
    means = np.zeros((num_classes, z.shape[1]))
    present = np.zeros(num_classes, dtype=bool)
    for c in range(num_classes):
        mask = labels == c
        if mask.any():
            means[c] = z[mask].mean(axis=0)
            present[c] = True
    return means, present


class CentroidBank:
    """Moving-average prototype per class, kept unit-norm.

    Centroids start at zero and are flagged initialized on their first
    non-degenerate update; prototype assignment refuses to run until every
    class has been initialized.
    """

    def __init__(self, num_classes: int, dim: int, alpha: float):
        if not (0.0 < alpha < 1.0):
            raise ValueError("alpha must be in (0, 1)")
        self.mu = np.zeros((num_classes, dim))
        self.alpha = alpha
        self.initialized = np.zeros(num_classes, dtype=bool)
        self.degenerate_skips = 0

    @property
    def num_classes(self) -> int:
        return self.mu.shape[0]

    @property
    def all_initialized(self) -> bool:
        return bool(self.initialized.all())

    def update(self, batch_means: np.ndarray, present: np.ndarray) -> None:
        """mu_c <- normalize(alpha * mu_c + (1 - alpha) * v_c) for present
        classes; absent classes stay bit-identical. A zero-norm blend skips
        the update (transient batch artifact) and bumps `degenerate_skips`.

        On a class's first update mu_c is zero, so normalization erases the
        (1 - alpha) scale; the blend is skipped there to make the result
        bit-exactly the normalized batch mean.
        """
        for c in range(self.num_classes):
            if not present[c]:
                continue
            blend = (batch_means[c] if not self.initialized[c]
                     else self.alpha * self.mu[c] + (1.0 - self.alpha) * batch_means[c])
            norm = float(np.linalg.norm(blend))
            if norm <= ZERO_NORM_EPS:
                self.degenerate_skips += 1
                continue
            self.mu[c] = blend / norm
            self.initialized[c] = True

    def assign(self, z_batch: np.ndarray) -> np.ndarray:
        """One-hot prototypical assignment: 1 at argmax_c z . mu_c per row
        (cosine similarity, both unit-norm); ties go to the lowest class index.
        """
        if not self.all_initialized:
            missing = np.flatnonzero(~self.initialized).tolist()
            raise RuntimeError(f"prototype bank not warmed up (classes {missing} never seen)")
        sims = np.asarray(z_batch, dtype=np.float64) @ self.mu.T
        return one_hot(sims.argmax(axis=1), self.num_classes)


class SoftLabelStore:
    """Per-instance soft labels for the unlabeled subset.

    q_i <- beta * q_i + (1 - beta) * onehot assignment, starting from zero
    (not uniform), with a per-instance update counter t_i. The L1 mass of q_i
    is then exactly 1 - beta^{t_i}.
    """

    def __init__(self, n_instances: int, num_classes: int, beta: float):
        if not (0.0 < beta < 1.0):
            raise ValueError("beta must be in (0, 1)")
        self.q = np.zeros((n_instances, num_classes))
        self.beta = beta
        self.update_counts = np.zeros(n_instances, dtype=np.int64)

    @property
    def n_instances(self) -> int:
        return self.q.shape[0]

    @property
    def num_classes(self) -> int:
        return self.q.shape[1]

    def update(self, indices: np.ndarray, assigned_onehot: np.ndarray) -> None:
        """Moving-average update for the listed instances only."""
        idx = np.asarray(indices, dtype=np.int64)
        y = np.asarray(assigned_onehot, dtype=np.float64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_instances):
            raise IndexError("soft-label index out of range")
        if y.shape != (idx.size, self.num_classes):
            raise ValueError("assignment shape must be (len(indices), num_classes)")
        is_onehot = np.all((y == 0.0) | (y == 1.0)) and np.all(y.sum(axis=1) == 1.0)
        if not is_onehot:
            raise ValueError("assignments must be one-hot rows")
        self.q[idx] = self.beta * self.q[idx] + (1.0 - self.beta) * y
        self.update_counts[idx] += 1

    def save_csv(self, path: str) -> None:
        """Snapshot export: index, update count, then the q vector per instance."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "count"] + [f"q{c}" for c in range(self.num_classes)])
            for i in range(self.n_instances):
                writer.writerow([i, int(self.update_counts[i])]
                                + [f"{v:.17g}" for v in self.q[i]])
