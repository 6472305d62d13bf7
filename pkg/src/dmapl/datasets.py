"""Synthetic two-domain benchmark generation, CSV ingestion, stratified splits.

The desk-scale benchmark is a pair of Gaussian-mixture datasets: the target
domain is the source mixture rotated (in the first two feature dimensions)
and translated, with fresh noise. Shift severity is dialed by the rotation
angle, translation and noise level.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .numkit import DmaplError, make_rng


class CsvFormatError(DmaplError):
    """Malformed dataset CSV (ragged row, bad number, label out of range)."""


@dataclass
class Dataset:
    """A feature matrix with optional integer labels.

    features: (n, d) float64. labels: (n,) int64 in [0, num_classes) or None.
    """

    features: np.ndarray
    labels: np.ndarray | None
    num_classes: int
    domain_tag: str = ""

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ValueError("labels length must match feature rows")
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise ValueError("label out of range for declared class count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    def without_labels(self) -> "Dataset":
        return Dataset(self.features.copy(), None, self.num_classes, self.domain_tag)

    def subset(self, indices: np.ndarray, domain_tag: str | None = None) -> "Dataset":
        labels = self.labels[indices] if self.labels is not None else None
        return Dataset(self.features[indices], labels, self.num_classes,
                       self.domain_tag if domain_tag is None else domain_tag)


@dataclass(frozen=True)
class DomainShiftSpec:
    """Parameters of the synthetic source/target domain pair.

    `class_separation` is the distance between adjacent class centers on the
    circle layout. The default values are the benchmark used throughout the
    acceptance suite.
    """

    num_classes: int = 4
    feature_dim: int = 2
    samples_per_class: int = 500
    class_separation: float = 4.0
    shift_rotation_deg: float = 30.0
    shift_translation: tuple[float, ...] = ()
    noise_sigma: float = 0.6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be > 0")
        if not (0 <= self.shift_rotation_deg < 360):
            raise ValueError("shift_rotation_deg must be in [0, 360)")
        if self.feature_dim < 2 and self.shift_rotation_deg != 0:
            raise ValueError("rotation requires dim >= 2")
        if self.shift_translation and len(self.shift_translation) != self.feature_dim:
            raise ValueError("shift_translation length must equal feature_dim")

    def translation_vector(self) -> np.ndarray:
        if not self.shift_translation:
            return np.zeros(self.feature_dim)
        return np.asarray(self.shift_translation, dtype=np.float64)


def class_centers(num_classes: int, feature_dim: int, separation: float) -> np.ndarray:
    """Class centers on a circle in the first two dims, adjacent centers
    `separation` apart. With one class the center sits at the origin; in 1-D
    the centers sit on a line with the same spacing."""
    centers = np.zeros((num_classes, feature_dim))
    if num_classes == 1:
        return centers
    if feature_dim == 1:
        centers[:, 0] = separation * np.arange(num_classes)
        return centers
    radius = separation / (2.0 * math.sin(math.pi / num_classes))
    angles = 2.0 * math.pi * np.arange(num_classes) / num_classes
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def rotation_matrix(degrees: float, dim: int) -> np.ndarray:
    """Rotation by `degrees` in the plane of the first two dims, identity elsewhere."""
    if dim < 2:
        if degrees != 0:
            raise ValueError("rotation requires dim >= 2")
        return np.eye(max(dim, 1))
    theta = math.radians(degrees)
    rot = np.eye(dim)
    rot[0, 0] = math.cos(theta)
    rot[0, 1] = -math.sin(theta)
    rot[1, 0] = math.sin(theta)
    rot[1, 1] = math.cos(theta)
    return rot


def sample_gaussian_clusters(centers: np.ndarray, samples_per_class: int,
                             noise_sigma: float, seed: int,
                             domain_tag: str = "") -> Dataset:
    """Draw `samples_per_class` points per center with isotropic Gaussian noise."""
    rng = make_rng(seed)
    num_classes, dim = centers.shape
    features = np.vstack([
        centers[c] + noise_sigma * rng.standard_normal((samples_per_class, dim))
        for c in range(num_classes)
    ])
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    return Dataset(features, labels, num_classes, domain_tag)


def generate_domain_pair(spec: DomainShiftSpec) -> tuple[Dataset, Dataset]:
    """Generate the (source, target) pair: same clusters, target transformed
    by the configured rotation and translation, fresh noise per domain.

    Deterministic in the seed; the two domains use independent child seeds.
    """
    centers = class_centers(spec.num_classes, spec.feature_dim, spec.class_separation)
    source_seed, target_seed = np.random.SeedSequence(spec.seed).generate_state(2)
    source = sample_gaussian_clusters(centers, spec.samples_per_class,
                                      spec.noise_sigma, int(source_seed), "source")
    rot = rotation_matrix(spec.shift_rotation_deg, spec.feature_dim)
    shifted = centers @ rot.T + spec.translation_vector()
    target = sample_gaussian_clusters(shifted, spec.samples_per_class,
                                      spec.noise_sigma, int(target_seed), "target")
    return source, target


def stratified_split(data: Dataset, ratio: float, seed: int) -> tuple[Dataset, Dataset]:
    """Split per class: floor(ratio * n_c) rows to train, the rest to test.

    Disjoint, exhaustive, deterministic in the seed. Errors if any class has
    fewer than 2 samples (it could not contribute to both sides).
    """
    if not data.is_labeled:
        raise ValueError("stratified_split requires a labeled dataset")
    if not (0.0 < ratio < 1.0):
        raise ValueError("ratio must be in (0, 1)")
    rng = make_rng(seed)
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for c in range(data.num_classes):
        idx = np.flatnonzero(data.labels == c)
        if idx.size < 2:
            raise ValueError(f"class {c} too small to split ({idx.size} samples)")
        idx = idx[rng.permutation(idx.size)]
        k = math.floor(ratio * idx.size)
        train_idx.append(idx[:k])
        test_idx.append(idx[k:])
    train = data.subset(np.concatenate(train_idx))
    test = data.subset(np.concatenate(test_idx))
    return train, test


def save_csv(data: Dataset, path: str) -> None:
    """Write the dataset as CSV: header f0..f{d-1}[,label], 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"f{j}" for j in range(data.dim)]
        if data.is_labeled:
            header.append("label")
        writer.writerow(header)
        for i in range(data.n):
            row = [f"{v:.17g}" for v in data.features[i]]
            if data.is_labeled:
                row.append(str(int(data.labels[i])))
            writer.writerow(row)


def load_csv(path: str, num_classes: int | None = None, domain_tag: str = "") -> Dataset:
    """Load a dataset CSV written by save_csv (or hand-made in that format).

    With `num_classes` given, labels are validated against it; otherwise the
    class count is inferred as max(label)+1 (0 for unlabeled files).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        has_label = bool(header) and header[-1] == "label"
        dim = len(header) - (1 if has_label else 0)
        if dim < 1:
            raise CsvFormatError(f"{path}: header declares no feature columns")
        feats: list[list[float]] = []
        labels: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                feats.append([float(v) for v in row[:dim]])
            except ValueError:
                raise CsvFormatError(f"{path}: line {lineno}: non-numeric feature value") from None
            if has_label:
                try:
                    lab = int(row[dim])
                except ValueError:
                    raise CsvFormatError(f"{path}: line {lineno}: non-integer label") from None
                if lab < 0:
                    raise CsvFormatError(f"{path}: line {lineno}: negative label")
                if num_classes is not None and lab >= num_classes:
                    raise CsvFormatError(
                        f"{path}: line {lineno}: label {lab} out of range for {num_classes} classes")
                labels.append(lab)
    features = np.asarray(feats, dtype=np.float64).reshape(len(feats), dim)
    label_arr = np.asarray(labels, dtype=np.int64) if has_label else None
    if num_classes is None:
        num_classes = int(label_arr.max()) + 1 if has_label and label_arr.size else 0
    return Dataset(features, label_arr, num_classes, domain_tag)
