"""Finite-difference verification of every gradient the regularizers feed into training."""

from __future__ import annotations

import numpy as np

from .gan.networks import MlpNetwork
from .numerics import ParameterSet, Rng, finite_diff_check
from .numerics import autodiff as ad
from .regularizers import FeatureBatch, batch_entropy, uniformity_loss

TOLERANCE = 1e-4


def _uniformity_case(rng: Rng, normalize: bool) -> float:
    m = 2 + int(rng.integers(9, 1)[0])
    d = 2 + int(rng.integers(7, 1)[0])
    ps = ParameterSet({"f": rng.normal(m, d)})
    return finite_diff_check(lambda: uniformity_loss(ps["f"], 2.0, normalize), ps)


def _entropy_case(rng: Rng) -> float:
    m = 1 + int(rng.integers(8, 1)[0])
    d = 2 + int(rng.integers(15, 1)[0])
    ps = ParameterSet({"f": rng.normal(m, d) * (0.1 + 3.0 * rng.uniform(1, 1)[0, 0])})
    return finite_diff_check(lambda: batch_entropy(ps["f"]), ps)


def _tap_case(rng: Rng, which: str) -> float:
    """Regularizer on a hidden layer of a small tanh MLP, differentiated w.r.t. its weights."""
    net = MlpNetwork([3, 6, 5, 2], rng, "tanh")
    z = rng.normal(6, 3)

    def objective():
        _, hidden = net.forward(z)
        feats = FeatureBatch(hidden[1], layer_id=1)
        if which == "uniformity":
            return uniformity_loss(feats, 2.0, normalize=True)
        return batch_entropy(feats)

    return finite_diff_check(objective, net.params)


def run_suite(n_instances: int = 100, seed: int = 0, n_tap: int = 10) -> dict:
    """Max relative error per family of checks over seeded random instances."""
    rng = Rng(seed, 11)
    results = {
        "uniformity_loss": max(_uniformity_case(rng, True) for _ in range(n_instances)),
        "uniformity_loss_raw": max(_uniformity_case(rng, False) for _ in range(n_instances)),
        "batch_entropy": max(_entropy_case(rng) for _ in range(n_instances)),
        "uniformity_through_tap": max(_tap_case(rng, "uniformity") for _ in range(n_tap)),
        "entropy_through_tap": max(_tap_case(rng, "entropy") for _ in range(n_tap)),
    }
    results["passed"] = all(v < TOLERANCE for k, v in results.items())
    results["tolerance"] = TOLERANCE
    return results


def operator_suite(n_instances: int = 100, seed: int = 0) -> dict[str, float]:
    """Central-difference check of every differentiable primitive on random inputs."""
    rng = Rng(seed, 12)
    positive = lambda x: ad.add(ad.mul(x, x), ad.constant(0.5))  # noqa: E731
    unary = {
        "tanh": ad.tanh,
        "sigmoid": ad.sigmoid,
        "softplus": ad.softplus,
        "exp": ad.exp,
        "log": lambda x: ad.log(positive(x)),
        "reciprocal": lambda x: ad.reciprocal(positive(x)),
        "sqrt": lambda x: ad.sqrt(positive(x)),
        "sin": ad.sin,
        "cos": ad.cos,
        "row_mean": ad.row_mean,
        "row_var": ad.row_var,
        "row_sum": ad.row_sum,
        "col_sum": ad.col_sum,
        "transpose": ad.transpose,
        "sqdist": ad.sqdist,
        "neg": ad.neg,
        "relu": ad.relu,
        "leaky_relu": ad.leaky_relu,
        "clamp_min": lambda x: ad.clamp_min(x, 0.1),
        "scale": lambda x: ad.scale(x, -1.7),
    }
    errors: dict[str, float] = {}
    weights_cache: dict[tuple, np.ndarray] = {}
    for name, fn in unary.items():
        worst = 0.0
        for _ in range(n_instances):
            shape = (1 + int(rng.integers(4, 1)[0]), 1 + int(rng.integers(4, 1)[0]))
            ps = ParameterSet({"x": rng.normal(*shape)})
            out_shape = fn(ad.constant(ps["x"].value)).shape
            w = weights_cache.setdefault(out_shape, rng.normal(*out_shape))
            worst = max(worst, finite_diff_check(lambda: ad.total(ad.mul(fn(ps["x"]), ad.constant(w))), ps))
        errors[name] = worst
    for name, fn in {"matmul": ad.matmul, "add": ad.add, "mul": ad.mul}.items():
        worst = 0.0
        for _ in range(n_instances):
            m, k, n = (1 + int(v) for v in rng.integers(4, 3))
            if name == "matmul":
                shapes = ((m, k), (k, n))
            else:
                shapes = ((m, n), [(m, n), (1, n), (m, 1), (1, 1)][int(rng.integers(4, 1)[0])])
            ps = ParameterSet({"a": rng.normal(*shapes[0]), "b": rng.normal(*shapes[1])})
            out = fn(ad.constant(ps["a"].value), ad.constant(ps["b"].value))
            w = rng.normal(*out.shape)
            worst = max(worst, finite_diff_check(lambda: ad.total(ad.mul(fn(ps["a"], ps["b"]), ad.constant(w))), ps))
        errors[name] = worst
    return errors
