"""Seeded random draws.

`Rng` wraps numpy's PCG64 bit generator. Children created with `spawn` get
independent streams derived through `numpy.random.SeedSequence`, so per-sample
or per-layer draws do not depend on the order in which they are requested.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

import hcc3d.errors

_MAX_SEED = 2**64


class Rng:
    def __init__(self, seed: int, *, spawn_key: tuple[int, ...] = ()) -> None:
        if not 0 <= seed < _MAX_SEED:
            raise hcc3d.errors.ArgumentError(f"Seed {seed} is not an unsigned 64-bit integer.")

        self.seed = seed
        self.spawn_key = spawn_key
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(seed, spawn_key=spawn_key))
        )

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, spawn_key={self.spawn_key})"

    def spawn(self, *keys: int) -> Rng:
        """An independent generator identified by this generator's key plus `keys`."""
        return Rng(self.seed, spawn_key=self.spawn_key + tuple(keys))

    def uniform(
        self,
        shape: Sequence[int],
        *,
        low: float = 0.0,
        high: float = 1.0,
        dtype: str = "float64",
    ) -> np.ndarray:
        draws = self._gen.random(tuple(shape), dtype=np.dtype(dtype).type)
        return (low + (high - low) * draws).astype(dtype, copy=False)

    def normal(
        self,
        shape: Sequence[int],
        *,
        mean: float = 0.0,
        std: float = 1.0,
        dtype: str = "float64",
    ) -> np.ndarray:
        draws = self._gen.standard_normal(tuple(shape), dtype=np.dtype(dtype).type)
        return (mean + std * draws).astype(dtype, copy=False)

    def integers(self, low: int, high: int, size: int | Sequence[int] | None = None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from [0, n)."""
        if not 0 <= k <= n:
            raise hcc3d.errors.ArgumentError(f"Cannot choose {k} distinct values from {n}.")

        return self._gen.choice(n, size=k, replace=False)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
