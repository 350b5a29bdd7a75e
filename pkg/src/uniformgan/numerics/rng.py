"""Seeded random sampling on top of the Philox4x64-10 counter-based generator.

The 128-bit Philox key is ``seed | (stream << 64)`` and the counter starts at
zero, so a ``(seed, stream)`` pair fully determines every draw. Normal draws use
numpy's ziggurat sampler on that bit stream, which is stable across platforms
for a given numpy release.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class Rng:
    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative")
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        key = self.seed | (self.stream << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"

    def child(self, stream: int) -> "Rng":
        """Independent generator sharing the seed; used for per-task substreams."""
        return Rng(self.seed, stream)

    def normal(self, rows: int, cols: int) -> np.ndarray:
        _check_dims(rows, cols)
        return self._gen.standard_normal((rows, cols))

    def uniform(self, rows: int, cols: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        _check_dims(rows, cols)
        return self._gen.uniform(low, high, size=(rows, cols))

    def integers(self, high: int, size: int) -> np.ndarray:
        return self._gen.integers(0, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def sphere(self, n: int, dim: int) -> np.ndarray:
        """``n`` points uniform on the unit sphere in R^dim (rows of unit norm)."""
        x = self.normal(n, dim)
        norms = np.sqrt(np.einsum("ij,ij->i", x, x))[:, None]
        return x / norms


def _check_dims(rows: int, cols: int) -> None:
    if rows <= 0 or cols <= 0:
        raise ValueError(f"dimensions must be positive, got {rows}x{cols}")


def sample_normal(rng: Rng, rows: int, cols: int) -> np.ndarray:
    return rng.normal(rows, cols)


def sample_uniform_sphere(rng: Rng, n: int, dim: int) -> np.ndarray:
    return rng.sphere(n, dim)
