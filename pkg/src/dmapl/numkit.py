"""Small deterministic numeric kernel shared by every other module.

Everything runs on 64-bit floats. All randomness in the package flows through
`make_rng`, a seeded PCG64 generator, so identical seeds give identical runs.
"""

from __future__ import annotations

import numpy as np

# below this L2 norm a vector counts as zero for normalization purposes
ZERO_NORM_EPS = 1e-12


class DmaplError(Exception):
    """Base class for the package's domain errors (CLI maps these to exit 1)."""


class ZeroNormError(DmaplError):
    """Raised when asked to L2-normalize a (near-)zero vector."""


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; same seed, same draw sequence on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax (max-subtraction) along `axis`.

    Raises ValueError on an empty axis or non-finite input.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 0 or z.shape[axis] == 0:
        raise ValueError("empty logits")
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite logits")
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Return v / ||v||_2. Raises ZeroNormError when ||v||_2 <= 1e-12."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= ZERO_NORM_EPS:
        raise ZeroNormError("zero-norm vector")
    return v / norm


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise L2 normalization; rows with norm <= 1e-12 are left as zeros.

    The lenient zero-row behaviour is what the feature pipeline wants: a
    degenerate feature row then simply contributes nothing downstream.
    """
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    safe = np.where(norms > ZERO_NORM_EPS, norms, 1.0)
    out = m / safe
    out[norms[:, 0] <= ZERO_NORM_EPS] = 0.0
    return out


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Integer class labels -> one-hot float64 matrix of shape (n, num_classes)."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError("label out of range")
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out
