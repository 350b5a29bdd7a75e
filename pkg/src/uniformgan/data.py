"""Multi-modal 2-D toy datasets and CSV feature-matrix IO."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import Rng


class FeatureFileError(ValueError):
    pass


@dataclass
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    mode_centers: np.ndarray
    mode_sigma: float

    def __post_init__(self):
        if len(self.points) < 1:
            raise ValueError("dataset must contain at least one point")
        if len(self.labels) != len(self.points):
            raise ValueError("labels and points differ in length")
        k = len(self.mode_centers)
        if self.labels.min() < 0 or self.labels.max() >= k:
            raise ValueError("labels must reference existing modes")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_modes(self) -> int:
        return len(self.mode_centers)


def _gaussian_modes(centers: np.ndarray, sigma: float, n_per_mode: int, seed: int) -> LabeledDataset:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if n_per_mode < 1:
        raise ValueError("n_per_mode must be at least 1")
    rng = Rng(seed)
    k, d = centers.shape
    labels = np.repeat(np.arange(k), n_per_mode)
    points = centers[labels] + sigma * rng.normal(k * n_per_mode, d)
    return LabeledDataset(points, labels, centers, float(sigma))


def make_ring(k_modes: int = 8, radius: float = 2.0, sigma: float = 0.02, n_per_mode: int = 100, seed: int = 0) -> LabeledDataset:
    """Gaussian modes equally spaced on a circle, mode j at angle 2*pi*j/k."""
    if k_modes < 1:
        raise ValueError("k_modes must be at least 1")
    angles = 2.0 * math.pi * np.arange(k_modes) / k_modes
    centers = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return _gaussian_modes(centers, sigma, n_per_mode, seed)


def make_grid(side: int = 5, spacing: float = 2.0, sigma: float = 0.02, n_per_mode: int = 100, seed: int = 0) -> LabeledDataset:
    """side x side lattice of Gaussian modes centred on the origin."""
    if side < 1:
        raise ValueError("side must be at least 1")
    offsets = (np.arange(side) - (side - 1) / 2.0) * spacing
    gx, gy = np.meshgrid(offsets, offsets, indexing="ij")
    centers = np.column_stack([gx.ravel(), gy.ravel()])
    return _gaussian_modes(centers, sigma, n_per_mode, seed)


def subset(dataset: LabeledDataset, n_classes: int, n_per_class: int, seed: int = 0) -> LabeledDataset:
    """Keep ``n_classes`` randomly chosen modes and ``n_per_class`` random points of each.

    Labels and centers are kept in their original numbering order; the retained
    classes are relabelled 0..n_classes-1 in that order.
    """
    k = dataset.n_modes
    if not 1 <= n_classes <= k:
        raise ValueError(f"n_classes must be in [1, {k}], got {n_classes}")
    counts = np.bincount(dataset.labels, minlength=k)
    rng = Rng(seed)
    classes = np.sort(rng.choice(k, n_classes))
    keep = []
    for c in classes:
        members = np.flatnonzero(dataset.labels == c)
        if n_per_class > counts[c]:
            raise ValueError(f"class {c} has {counts[c]} points, requested {n_per_class}")
        keep.append(np.sort(members[rng.choice(len(members), n_per_class)]))
    idx = np.concatenate(keep)
    relabel = {int(c): i for i, c in enumerate(classes)}
    labels = np.array([relabel[int(l)] for l in dataset.labels[idx]])
    return LabeledDataset(dataset.points[idx].copy(), labels, dataset.mode_centers[classes].copy(), dataset.mode_sigma)


def save_features(path, matrix: np.ndarray, prefix: str = "f", extra: dict[str, np.ndarray] | None = None) -> None:
    """Write a matrix as CSV with header ``f0,...,f{d-1}`` and 17 significant digits."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    header = [f"{prefix}{j}" for j in range(matrix.shape[1])]
    extra = extra or {}
    header += list(extra)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, row in enumerate(matrix):
            cells = [f"{v:.17g}" for v in row]
            cells += [str(col[i]) for col in extra.values()]
            writer.writerow(cells)


def load_features(path) -> np.ndarray:
    """Read a numeric CSV written by :func:`save_features`; every column is returned."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FeatureFileError(f"{path}: empty file")
    header = rows[0]
    width = len(header)
    if width == 0 or any(not h.strip() for h in header):
        raise FeatureFileError(f"{path}: line 1: malformed header")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise FeatureFileError(f"{path}: line {lineno}: row has {len(row)} fields, header has {width}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise FeatureFileError(f"{path}: line {lineno}: {exc}") from None
    if not data:
        raise FeatureFileError(f"{path}: no data rows")
    return np.array(data, dtype=np.float64)


def save_dataset(path, dataset: LabeledDataset) -> None:
    save_features(path, dataset.points, prefix="x", extra={"label": dataset.labels})
