"""Parametric point-cloud primitives.

Every primitive samples points inside the unit ball. Samples are then rotated,
scaled into [MIN_SCALE, MAX_SCALE] and jittered, which keeps every coordinate
within [-1, 1].
"""

from __future__ import annotations

import math
from typing import Callable, Final

import numpy as np

import hcc3d.errors
import hcc3d.rng

PRIMITIVES: Final = ("sphere", "box", "cylinder", "cone", "torus", "plane", "helix", "cross")
MIN_SCALE: Final = 0.6
MAX_SCALE: Final = 0.9
# Per-coordinate uniform jitter amplitude.
JITTER: Final = 0.01
# Radius of the tube helix and cross points are scattered in.
TUBE: Final = 0.03


def _sphere(rng: hcc3d.rng.Rng, n: int) -> np.ndarray:
    pts = rng.normal((n, 3))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _box(rng: hcc3d.rng.Rng, n: int) -> np.ndarray:
    half = 1.0 / math.sqrt(3.0)
    pts = rng.uniform((n, 3), low=-half, high=half)
    axis = rng.integers(0, 3, size=n)
    side = np.where(rng.uniform((n,)) < 0.5, -half, half)
    pts[np.arange(n), axis] = side
    return pts


def _cylinder(rng: hcc3d.rng.Rng, n: int) -> np.ndarray:
    theta = rng.uniform((n,), high=2 * math.pi)
    z = rng.uniform((n,), low=-0.8, high=0.8)
    return np.stack([0.6 * np.cos(theta), 0.6 * np.sin(theta), z], axis=1)


def _cone(rng: hcc3d.rng.Rng, n: int) -> np.ndarray:
    theta = rng.uniform((n,), high=2 * math.pi)
    # sqrt makes the lateral surface area-uniform.
    t = np.sqrt(rng.uniform((n,)))
    radius = 0.6 * t
    return np.stack([radius * np.cos(theta), radius * np.sin(theta), 0.8 - 1.6 * t], axis=1)


def _torus(rng: hcc3d.rng.Rng, n: int) -> np.ndarray:
    theta = rng.uniform((n,), high=2 * math.pi)
    phi = rng.uniform((n,), high=2 * math.pi)
    ring = 0.7 + 0.3 * np.cos(phi)
    return np.stack([ring * np.cos(theta), ring * np.sin(theta), 0.3 * np.sin(phi)], axis=1)


def _plane(rng: hcc3d.rng.Rng, n: int) -> np.ndarray:
    half = 1.0 / math.sqrt(2.0)
    xy = rng.uniform((n, 2), low=-half, high=half)
    return np.concatenate([xy, np.zeros((n, 1))], axis=1)


def _tube(rng: hcc3d.rng.Rng, centers: np.ndarray) -> np.ndarray:
    offsets = rng.normal(centers.shape)
    offsets *= TUBE / np.maximum(np.linalg.norm(offsets, axis=1, keepdims=True), 1e-12)
    return centers + offsets * rng.uniform((len(centers), 1))


def _helix(rng: hcc3d.rng.Rng, n: int) -> np.ndarray:
    t = rng.uniform((n,), high=4 * math.pi)
    centers = np.stack([0.6 * np.cos(t), 0.6 * np.sin(t), 0.8 * (t / (2 * math.pi) - 1.0)], axis=1)
    return _tube(rng, centers) / (1.0 + TUBE)


def _cross(rng: hcc3d.rng.Rng, n: int) -> np.ndarray:
    centers = np.zeros((n, 3))
    axis = rng.integers(0, 3, size=n)
    centers[np.arange(n), axis] = rng.uniform((n,), low=-1.0, high=1.0)
    return _tube(rng, centers) / (1.0 + TUBE)


_SAMPLERS: Final[dict[str, Callable[[hcc3d.rng.Rng, int], np.ndarray]]] = {
    "sphere": _sphere,
    "box": _box,
    "cylinder": _cylinder,
    "cone": _cone,
    "torus": _torus,
    "plane": _plane,
    "helix": _helix,
    "cross": _cross,
}


def random_rotation(rng: hcc3d.rng.Rng) -> np.ndarray:
    """A uniformly distributed 3x3 rotation."""
    q, r = np.linalg.qr(rng.normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]

    return q


def sample(name: str, rng: hcc3d.rng.Rng, points: int) -> tuple[np.ndarray, float]:
    """Sample one rotated, scaled and jittered primitive. Returns (points, scale)."""
    if name not in _SAMPLERS:
        raise hcc3d.errors.ArgumentError(f'Unknown primitive "{name}".')

    raw = _SAMPLERS[name](rng.spawn(0), points)
    scale = float(rng.spawn(1).uniform((1,), low=MIN_SCALE, high=MAX_SCALE)[0])
    rotated = raw @ random_rotation(rng.spawn(2)).T
    jitter = rng.spawn(3).uniform((points, 3), low=-JITTER, high=JITTER)
    return np.clip(scale * rotated + jitter, -1.0, 1.0), scale
