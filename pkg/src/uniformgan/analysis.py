"""Feature-geometry diagnostics and the point-configuration experiment on the sphere."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import i0e

from .numerics import ParameterSet, Rng
from .numerics import autodiff as ad
from .regularizers import mean_pair_potential


def kmeans(features: np.ndarray, k: int, max_iters: int = 100, seed: int = 0, return_history: bool = False):
    """Lloyd's algorithm from a seeded k-means++ initialisation.

    Stops at an assignment fixpoint or after ``max_iters`` updates. A cluster that
    loses all its points is moved onto the point farthest from its current center.
    Returns ``(centers, assignments)``, plus the per-iteration distortion list when
    ``return_history`` is set.
    """
    x = np.asarray(features, dtype=np.float64)
    n = len(x)
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = Rng(seed)
    centers = _kmeanspp(x, k, rng)
    assign = _assign(x, centers)
    history = [_distortion(x, centers, assign)]
    for _ in range(max_iters):
        centers = _update(x, centers, assign)
        new_assign = _assign(x, centers)
        history.append(_distortion(x, centers, new_assign))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    if return_history:
        return centers, assign, history
    return centers, assign


def _sqdist(x, centers):
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _assign(x, centers):
    return _sqdist(x, centers).argmin(axis=1)


def _distortion(x, centers, assign):
    return float(((x - centers[assign]) ** 2).sum())


def _kmeanspp(x, k, rng):
    n = len(x)
    chosen = [int(rng.integers(n, 1)[0])]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every point already coincides with a center: take the first unused index
            idx = next(i for i in range(n) if i not in chosen)
        else:
            u = rng.uniform(1, 1)[0, 0] * total
            idx = int(np.searchsorted(np.cumsum(d2), u, side="right"))
            idx = min(idx, n - 1)
        chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _update(x, centers, assign):
    new = centers.copy()
    for j in range(len(centers)):
        members = assign == j
        if members.any():
            new[j] = x[members].mean(axis=0)
        else:
            far = ((x - centers[assign]) ** 2).sum(axis=1).argmax()
            new[j] = x[far]
    return new


def pca(features: np.ndarray, out_dims: int):
    """Return ``(projection, components, explained_variance_ratio)`` of centred data."""
    x = np.asarray(features, dtype=np.float64)
    if out_dims < 1 or out_dims > x.shape[1]:
        raise ValueError(f"out_dims must be in [1, {x.shape[1]}], got {out_dims}")
    centered = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:out_dims]
    var = s**2
    ratio = var[:out_dims] / var.sum() if var.sum() > 0 else np.zeros(out_dims)
    return centered @ components.T, components, ratio


def pca_project(features: np.ndarray, out_dims: int) -> np.ndarray:
    return pca(features, out_dims)[0]


def sincos_map(avg_feature) -> np.ndarray:
    """Map each element a_i to the point (sin a_i, cos a_i) on the unit circle."""
    a = np.asarray(avg_feature, dtype=np.float64).ravel()
    return np.column_stack([np.sin(a), np.cos(a)])


def uniform_circle_potential(gamma: float) -> float:
    """Expected Gaussian potential of two independent uniform points on S^1: e^{-2g} I0(2g)."""
    return float(i0e(2.0 * gamma))


@dataclass
class SphereExperimentConfig:
    n_points: int = 100
    ambient_dim: int = 3
    gamma: float = 2.0
    steps: int = 300
    step_size: float = 0.1
    seed: int = 0
    baseline_trials: int = 200

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("n_points must be at least 2")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.ambient_dim < 2:
            raise ValueError("ambient dimension must be at least 2")
        if self.steps < 0 or self.step_size <= 0 or self.baseline_trials < 1:
            raise ValueError("steps, step_size and baseline_trials must be positive")


def _normalize_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _potential_graph(points: ad.Node, gamma: float, mask: np.ndarray, n_pairs: int) -> ad.Node:
    pot = ad.exp(ad.scale(ad.sqdist(points), -gamma))
    return ad.scale(ad.total(ad.mul(pot, ad.constant(mask))), 1.0 / n_pairs)


def sphere_uniformity_experiment(cfg: SphereExperimentConfig) -> dict:
    """Projected gradient descent on the mean pair potential of points on S^{ambient_dim-1}.

    Every step moves against the gradient and renormalizes onto the sphere. A
    step that would raise the potential is retried with half the step size;
    accepted steps grow it by 1.5x. The baseline is the same potential for
    ``baseline_trials`` independent uniform configurations.
    """
    rng = Rng(cfg.seed)
    n = cfg.n_points
    mask = np.triu(np.ones((n, n)), k=1)
    n_pairs = n * (n - 1) // 2
    params = ParameterSet({"x": rng.sphere(n, cfg.ambient_dim)})
    node = params["x"]

    def value_and_grad():
        params.zero_grad()
        loss = _potential_graph(node, cfg.gamma, mask, n_pairs)
        ad.backward(loss)
        return loss.item(), node.grad.copy()

    potential, g = value_and_grad()
    trajectory = [potential]
    eta = cfg.step_size
    for _ in range(cfg.steps):
        accepted = False
        while eta > 1e-14:
            candidate = _normalize_rows(node.value - eta * g)
            if not np.isfinite(candidate).all():
                raise FloatingPointError("sphere experiment diverged")
            with ad.no_grad():
                cand_pot = _potential_graph(ad.constant(candidate), cfg.gamma, mask, n_pairs).item()
            if cand_pot <= potential:
                node.value = candidate
                accepted = True
                eta *= 1.5
                break
            eta *= 0.5
        if not accepted:
            break
        potential, g = value_and_grad()
        if not math.isfinite(potential):
            raise FloatingPointError("sphere experiment diverged")
        trajectory.append(potential)
    baseline = np.array(
        [mean_pair_potential(rng.child(t + 1).sphere(n, cfg.ambient_dim), cfg.gamma) for t in range(cfg.baseline_trials)]
    )
    return {
        "final_potential": potential,
        "baseline_mean": float(baseline.mean()),
        "baseline_std": float(baseline.std(ddof=1)) if len(baseline) > 1 else 0.0,
        "trajectory": trajectory,
        "points": node.value.copy(),
        "config": asdict(cfg),
    }
