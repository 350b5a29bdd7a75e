"""Uniformity and entropy regularizers on intermediate feature batches.

Both losses are built from :mod:`uniformgan.numerics.autodiff` operators, so they
can be added to a training objective and differentiated, or evaluated on plain
arrays as metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .numerics import autodiff as ad
from .numerics.autodiff import Node

NORM_FLOOR = 1e-12


@dataclass
class RegularizerConfig:
    gamma: float = 2.0
    lambda_g: float = 0.5
    lambda_d: float = 0.5
    delta_g: float = 0.1
    delta_d: float = 0.1
    variance_floor: float = 1e-12
    normalize_features: bool = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.variance_floor > 0:
            raise ValueError(f"variance_floor must be positive, got {self.variance_floor}")
        for name in ("lambda_g", "lambda_d", "delta_g", "delta_d"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class FeatureBatch:
    """M x d features tapped from one layer. ``features`` may be a node or an array."""

    features: Node
    layer_id: int = 0
    normalized: bool = False

    def __post_init__(self):
        if not isinstance(self.features, Node):
            self.features = ad.constant(self.features)
        if self.features.shape[0] < 1:
            raise ValueError("feature batch needs at least one row")
        if self.normalized:
            norms = np.linalg.norm(self.features.value, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-9:
                raise ValueError("batch flagged as normalized but rows are not unit norm")

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def values(self) -> np.ndarray:
        return self.features.value


def gaussian_potential(x, y, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2) for two vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"vector lengths differ: {x.size} vs {y.size}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    diff = x - y
    return math.exp(-gamma * float(diff @ diff))


def l2_normalize(x: Node) -> Node:
    """Divide each row by its Euclidean norm, inside the graph."""
    norms = ad.clamp_min(ad.sqrt(ad.row_sum(ad.mul(x, x))), NORM_FLOOR)
    return ad.mul(x, ad.reciprocal(norms))


def _as_node(features) -> Node:
    if isinstance(features, FeatureBatch):
        return features.features
    if isinstance(features, Node):
        return features
    return ad.constant(features)


def _pair_mask(m: int) -> np.ndarray:
    return np.triu(np.ones((m, m)), k=1)


def uniformity_loss(batch, gamma: float = 2.0, normalize: bool = True) -> Node:
    """Log of the mean Gaussian potential over distinct unordered row pairs.

    Rows are L2-normalized first unless ``normalize`` is false or the batch is
    already flagged as normalized. The smallest pair distance is factored out
    before exponentiating; it is held constant, which leaves both the value and
    the gradient unchanged.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x = _as_node(batch)
    m = x.shape[0]
    if m < 2:
        raise ValueError("uniformity_loss needs at least two rows")
    already = isinstance(batch, FeatureBatch) and batch.normalized
    if normalize and not already:
        x = l2_normalize(x)
    mask = _pair_mask(m)
    dist = ad.sqdist(x)
    shift = float(dist.value[mask > 0].min())
    # only the counted pairs are shifted, so masked-out entries stay at exp(0)
    potentials = ad.exp(ad.scale(ad.add(dist, ad.constant(-shift * mask)), -gamma))
    n_pairs = m * (m - 1) // 2
    avg = ad.scale(ad.total(ad.mul(potentials, ad.constant(mask))), 1.0 / n_pairs)
    return ad.add(ad.log(avg), ad.constant(-gamma * shift))


def row_entropy(x, variance_floor: float = 1e-12, phi: float | None = None) -> Node:
    """Per-row entropy surrogate as an M x 1 node.

    phi = max(||f||, floor); value = 0.5 * log(max(Var(f / phi), floor)) + log(phi),
    with Var the population variance over the row. A positive ``phi`` replaces the
    row norm by a fixed rescaling constant; without clamping the value is unchanged.
    """
    x = _as_node(x)
    if x.shape[1] < 2:
        raise ValueError("entropy needs at least two feature elements per row")
    if phi is None:
        phi_node = ad.clamp_min(ad.sqrt(ad.row_sum(ad.mul(x, x))), variance_floor)
    elif phi > 0:
        phi_node = ad.constant(np.full((x.shape[0], 1), float(phi)))
    else:
        raise ValueError(f"phi must be positive, got {phi}")
    rescaled = ad.mul(x, ad.reciprocal(phi_node))
    var = ad.clamp_min(ad.row_var(rescaled), variance_floor)
    return ad.add(ad.scale(ad.log(var), 0.5), ad.log(phi_node))


def entropy_surrogate(feature_row, variance_floor: float = 1e-12, phi: float | None = None) -> Node:
    """Entropy surrogate of a single feature vector (1 x 1 node)."""
    row = feature_row if isinstance(feature_row, Node) else ad.constant(np.asarray(feature_row, dtype=np.float64).reshape(1, -1))
    if row.shape[0] != 1:
        raise ValueError(f"expected a single row, got shape {row.shape}")
    return row_entropy(row, variance_floor, phi)


def batch_entropy(batch, variance_floor: float = 1e-12) -> Node:
    """Mean of the per-row entropy surrogate over the batch."""
    return ad.mean(row_entropy(_as_node(batch), variance_floor))


def pairwise_potential_metric(features, gamma: float = 2.0) -> float:
    """Mean distinct-pair Gaussian potential of L2-normalized rows. Lower is more uniform."""
    x = np.asarray(features.values() if isinstance(features, FeatureBatch) else features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("pairwise potential needs at least two rows")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    norms = np.maximum(np.linalg.norm(x, axis=1, keepdims=True), NORM_FLOOR)
    return mean_pair_potential(x / norms, gamma)


def mean_pair_potential(x: np.ndarray, gamma: float) -> float:
    return float(np.exp(-gamma * pdist(x, "sqeuclidean")).mean())


def batch_entropy_metric(features, variance_floor: float = 1e-12) -> float:
    with ad.no_grad():
        return batch_entropy(_as_node(features), variance_floor).item()
