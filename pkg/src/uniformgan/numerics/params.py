"""Named parameter collections, an Adam step (momentum-free by default) and finite-difference checks."""

from __future__ import annotations

import math
from typing import Callable, Iterator

import numpy as np

from .autodiff import Node, backward, parameter


class ParameterSet:
    """Ordered mapping of names to trainable leaf nodes."""

    def __init__(self, items: dict[str, np.ndarray] | None = None):
        self._nodes: dict[str, Node] = {}
        for name, value in (items or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> Node:
        if name in self._nodes:
            raise KeyError(f"duplicate parameter {name!r}")
        node = parameter(value, name=name)
        self._nodes[name] = node
        return node

    def __getitem__(self, name: str) -> Node:
        return self._nodes[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._nodes)

    def __len__(self) -> int:
        return len(self._nodes)

    def items(self):
        return self._nodes.items()

    def nodes(self) -> list[Node]:
        return list(self._nodes.values())

    def zero_grad(self) -> None:
        for node in self._nodes.values():
            node.zero_grad()

    def size(self) -> int:
        return sum(n.value.size for n in self._nodes.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([n.value.ravel() for n in self._nodes.values()])

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([n.grad.ravel() for n in self._nodes.values()])

    def set_flat(self, vec: np.ndarray) -> None:
        offset = 0
        for node in self._nodes.values():
            k = node.value.size
            node.value = vec[offset : offset + k].reshape(node.value.shape).copy()
            offset += k

    def all_finite(self) -> bool:
        return all(np.isfinite(n.value).all() for n in self._nodes.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: n.value.copy() for k, n in self._nodes.items()}


class Adam:
    """Adam, by default with the first-moment decay fixed at zero.

    Each coordinate moves by ``lr * m_hat / (sqrt(v_hat) + eps)`` where ``v`` is an
    exponential average of squared gradients (decay ``beta2``) with bias
    correction. With ``beta1 = 0`` the first moment is the raw gradient
    (no momentum). No weight decay.
    """

    def __init__(self, params: ParameterSet, lr: float = 1e-3, beta2: float = 0.9, eps: float = 1e-8, beta1: float = 0.0):
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._v = {name: np.zeros_like(node.value) for name, node in params.items()}
        self._m = {name: np.zeros_like(node.value) for name, node in params.items()} if beta1 > 0 else None

    def step(self) -> None:
        self.t += 1
        correction = 1.0 - self.beta2**self.t
        for name, node in self.params.items():
            g = node.grad
            v = self._v[name]
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self._m is not None:
                m = self._m[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                g = m / (1.0 - self.beta1**self.t)
            node.value = node.value - self.lr * g / (np.sqrt(v / correction) + self.eps)


def finite_diff_check(
    f: Callable[[], Node],
    params: ParameterSet,
    h: float = 1e-5,
    coords: np.ndarray | None = None,
) -> float:
    """Max relative error between backward-pass and central-difference gradients.

    ``f`` rebuilds the scalar graph from the current parameter values. The error
    for a coordinate is ``|g_analytic - g_fd| / max(1, |g_fd|)``. ``coords``
    restricts the check to a subset of flat indices (spot checks).
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    params.zero_grad()
    root = f()
    _require_finite(root.item())
    backward(root)
    analytic = params.flat_grad()
    theta = params.flat()
    indices = np.arange(theta.size) if coords is None else np.asarray(coords)
    worst = 0.0
    try:
        for i in indices:
            shifted = theta.copy()
            shifted[i] = theta[i] + h
            params.set_flat(shifted)
            up = _require_finite(f().item())
            shifted[i] = theta[i] - h
            params.set_flat(shifted)
            down = _require_finite(f().item())
            fd = (up - down) / (2.0 * h)
            worst = max(worst, abs(analytic[i] - fd) / max(1.0, abs(fd)))
    finally:
        params.set_flat(theta)
        params.zero_grad()
    return worst


def _require_finite(value: float) -> float:
    if not math.isfinite(value):
        raise FloatingPointError(f"objective is not finite: {value}")
    return value
