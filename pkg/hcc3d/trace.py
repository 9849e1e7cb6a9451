"""Write and read compression traces.

A trace directory holds one HCCT file per traced tensor and `index.json`
with the selection, token counts and the config that produced it.
"""

from __future__ import annotations

import pathlib
from typing import TYPE_CHECKING

import msgspec
import msgspec.json

import hcc3d.errors
import hcc3d.file
import hcc3d.hash
import hcc3d.hcct
from hcc3d.adm import CompressionTrace
from hcc3d.conf import HCCConfig
from hcc3d.tensor import Tensor

if TYPE_CHECKING:
    from hcc3d.file import PathLike

INDEX_FILE = "index.json"
TENSORS = ("A_cov", "I", "S_c", "S_sel", "ranking", "F_g", "F_d", "Z")


class TraceIndex(msgspec.Struct, frozen=True):
    config: HCCConfig
    tokens_in: int
    tokens_out: int
    reduction: float
    selected: list[int]
    tensors: dict[str, str]


def reduction(tokens_in: int, tokens_out: int) -> float:
    return 1.0 - tokens_out / tokens_in


def save(trace: CompressionTrace, path: PathLike, *, config: HCCConfig) -> TraceIndex:
    root = pathlib.Path(path)
    digests = {}
    for name in TENSORS:
        content = hcc3d.hcct.encode(getattr(trace, name))
        hcc3d.file.write(root / f"{name}.hcct", content)
        digests[name] = hcc3d.hash.blob(content)

    tokens_in = trace.A_cov.shape[0]
    tokens_out = trace.Z.shape[0]
    index = TraceIndex(
        config=config,
        tokens_in=tokens_in,
        tokens_out=tokens_out,
        reduction=reduction(tokens_in, tokens_out),
        selected=trace.selected,
        tensors=digests,
    )
    hcc3d.file.write(root / INDEX_FILE, msgspec.json.format(msgspec.json.encode(index)))
    return index


def load_index(path: PathLike) -> TraceIndex:
    index_path = hcc3d.file.require_dir(path) / INDEX_FILE
    try:
        return msgspec.json.decode(hcc3d.file.read(index_path), type=TraceIndex)
    except (msgspec.DecodeError, msgspec.ValidationError) as exc:
        raise hcc3d.errors.FormatError(f'Invalid trace index "{index_path}": {exc}') from exc


def load(path: PathLike) -> tuple[TraceIndex, CompressionTrace]:
    root = pathlib.Path(path)
    index = load_index(root)
    tensors: dict[str, Tensor] = {name: hcc3d.hcct.read(root / f"{name}.hcct") for name in TENSORS}
    return index, CompressionTrace(selected=index.selected, **tensors)
