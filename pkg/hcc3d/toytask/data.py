"""Synthetic shape-classification datasets.

A dataset directory holds `points.hcct` (N x P x 3, float64) and
`labels.json` with the labels, class names and generation parameters.
"""

from __future__ import annotations

import pathlib
from typing import TYPE_CHECKING, Sequence

import msgspec
import msgspec.json
import msgspec.structs
import numpy as np

import hcc3d.errors
import hcc3d.file
import hcc3d.hcct
import hcc3d.rng
from hcc3d.tensor import DType, Tensor
from hcc3d.toytask import encode, shapes

if TYPE_CHECKING:
    from hcc3d.file import PathLike

POINTS_FILE = "points.hcct"
LABELS_FILE = "labels.json"


class ToySample(msgspec.Struct, frozen=True):
    points: Tensor
    label: int
    scale: float = 1.0
    features: Tensor | None = None


class DatasetIndex(msgspec.Struct, frozen=True):
    classes: list[str]
    per_class: int
    points: int
    seed: int
    labels: list[int]
    scales: list[float]


def gen_dataset(classes: int, per_class: int, points: int, seed: int) -> list[ToySample]:
    """per_class samples of each of the first `classes` primitives.

    Sample j of class c draws from its own child generator keyed (c, j), so the
    result does not depend on generation order.
    """
    if not 2 <= classes <= len(shapes.PRIMITIVES):
        raise hcc3d.errors.ConfigError(
            f"classes must be within [2, {len(shapes.PRIMITIVES)}], got {classes}."
        )
    if per_class < 1 or points < 1:
        raise hcc3d.errors.ConfigError("per_class and points must be at least 1.")

    rng = hcc3d.rng.Rng(seed)
    samples = []
    for label, name in enumerate(shapes.PRIMITIVES[:classes]):
        for j in range(per_class):
            pts, scale = shapes.sample(name, rng.spawn(label, j), points)
            samples.append(
                ToySample(points=Tensor(pts, dtype="float64"), label=label, scale=scale)
            )

    return samples


def encode_dataset(
    samples: Sequence[ToySample], *, m: int, d_init: int, seed: int, dtype: DType = "float32"
) -> list[ToySample]:
    """Attach surrogate-encoder features to every sample."""
    return [
        msgspec.structs.replace(
            sample,
            features=encode.surrogate_encode(sample.points, m, d_init, seed, dtype=dtype),
        )
        for sample in samples
    ]


def split(
    samples: Sequence[ToySample], val_fraction: float, seed: int
) -> tuple[list[ToySample], list[ToySample]]:
    """Shuffle deterministically and split into (train, val)."""
    if not 0 <= val_fraction < 1:
        raise hcc3d.errors.ConfigError(f"val_fraction must be within [0, 1), got {val_fraction}.")

    order = hcc3d.rng.Rng(seed).spawn(0xDA7A).permutation(len(samples))
    n_val = int(round(len(samples) * val_fraction))
    val = [samples[i] for i in order[:n_val]]
    train = [samples[i] for i in order[n_val:]]
    return train, val


def save(samples: Sequence[ToySample], path: PathLike, *, seed: int) -> DatasetIndex:
    if not samples:
        raise hcc3d.errors.ArgumentError("Cannot save an empty dataset.")

    root = pathlib.Path(path)
    labels = [sample.label for sample in samples]
    index = DatasetIndex(
        classes=list(shapes.PRIMITIVES[: max(labels) + 1]),
        per_class=labels.count(0),
        points=samples[0].points.shape[0],
        seed=seed,
        labels=labels,
        scales=[sample.scale for sample in samples],
    )
    hcc3d.hcct.write(root / POINTS_FILE, np.stack([sample.points.data for sample in samples]))
    hcc3d.file.write(root / LABELS_FILE, msgspec.json.format(msgspec.json.encode(index)))
    return index


def load(path: PathLike) -> tuple[DatasetIndex, list[ToySample]]:
    root = hcc3d.file.require_dir(path)
    try:
        index = msgspec.json.decode(hcc3d.file.read(root / LABELS_FILE), type=DatasetIndex)
    except (msgspec.DecodeError, msgspec.ValidationError) as exc:
        raise hcc3d.errors.FormatError(f'Invalid dataset labels in "{root}": {exc}') from exc

    points = hcc3d.hcct.read(root / POINTS_FILE)
    if len(index.scales) != len(index.labels):
        raise hcc3d.errors.FormatError(
            f'Dataset "{root}" has {len(index.scales)} scales for {len(index.labels)} labels.'
        )
    if points.ndim != 3 or points.shape[0] != len(index.labels) or points.shape[2] != 3:
        raise hcc3d.errors.ShapeError(
            f"Dataset points have shape {points.shape}, expected ({len(index.labels)}, P, 3)."
        )
    if not index.labels:
        raise hcc3d.errors.FormatError(f'Dataset "{root}" is empty.')

    samples = [
        ToySample(points=Tensor(points.data[i]), label=label, scale=scale)
        for i, (label, scale) in enumerate(zip(index.labels, index.scales))
    ]
    return index, samples
