"""A deterministic stand-in for a pretrained point-cloud encoder.

m centers are picked by farthest point sampling. Each center's neighborhood
(its NEIGHBORS nearest points) is summarized by a 7-channel descriptor:

    density     DENSITY_SCALE * (points within RADIUS of the center) / P
    spread_0..2 sqrt of the neighborhood covariance eigenvalues, ascending, / RADIUS
    centroid_xyz  the neighborhood centroid in world coordinates

Only the centroid channels depend on absolute position. Descriptors are lifted
to d_init by a fixed random projection derived from the seed.
"""

from __future__ import annotations

import math
from typing import Final

import numpy as np

import hcc3d.errors
import hcc3d.hash
import hcc3d.rng
from hcc3d.tensor import DType, Tensor

CHANNELS: Final = (
    "density",
    "spread_0",
    "spread_1",
    "spread_2",
    "centroid_x",
    "centroid_y",
    "centroid_z",
)
CENTROID_CHANNELS: Final = slice(4, 7)
RADIUS: Final = 0.25
NEIGHBORS: Final = 16
DENSITY_SCALE: Final = 10.0


def farthest_point_sample(points: np.ndarray, m: int) -> np.ndarray:
    """Indices of m points, starting at index 0, each farthest from those chosen."""
    n = points.shape[0]
    chosen = np.zeros(m, dtype=np.int64)
    dist = np.full(n, np.inf)
    for i in range(1, m):
        delta = points - points[chosen[i - 1]]
        dist = np.minimum(dist, np.einsum("ij,ij->i", delta, delta))
        chosen[i] = int(np.argmax(dist))

    return chosen


def describe(points: np.ndarray, m: int) -> np.ndarray:
    """(m, 7) descriptors for the farthest-point-sampled centers."""
    centers = points[farthest_point_sample(points, m)]
    sq_dist = ((centers[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
    density = DENSITY_SCALE * (sq_dist < RADIUS**2).sum(axis=1) / points.shape[0]

    k = min(NEIGHBORS, points.shape[0])
    nearest = np.argsort(sq_dist, axis=1, kind="stable")[:, :k]
    hood = points[nearest]
    centroid = hood.mean(axis=1)
    centered = hood - centroid[:, None, :]
    cov = np.einsum("mki,mkj->mij", centered, centered) / k
    spread = np.sqrt(np.clip(np.linalg.eigvalsh(cov), 0.0, None)) / RADIUS

    return np.concatenate([density[:, None], spread, centroid], axis=1)


def projection(seed: int, d_init: int) -> np.ndarray:
    rng = hcc3d.rng.Rng(hcc3d.hash.seed("surrogate-projection", seed, d_init))
    return rng.normal((len(CHANNELS), d_init)) / math.sqrt(len(CHANNELS))


def surrogate_encode(
    points: Tensor | np.ndarray, m: int, d_init: int, seed: int, *, dtype: DType = "float32"
) -> Tensor:
    """Encode (P, 3) points as (m, d_init) token features."""
    pts = points.data if isinstance(points, Tensor) else np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise hcc3d.errors.DimensionError(f"Expected (P, 3) points, got {pts.shape}.")
    if pts.shape[0] < m:
        raise hcc3d.errors.InputError(f"Cannot sample m={m} tokens from {pts.shape[0]} points.")

    features = describe(pts.astype(np.float64), m) @ projection(seed, d_init)
    return Tensor(features, dtype=dtype)
