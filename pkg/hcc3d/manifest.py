"""Run manifests.

Every command writing artifacts leaves `run.json` next to them: the command
and arguments that produced them, the config hash and seed, and a content
digest of every deterministic artifact file. Volatile files (wall-clock
timings, logs) are listed without digests.
"""

from __future__ import annotations

import pathlib
from typing import TYPE_CHECKING, Iterable, Sequence

import msgspec
import msgspec.json

import hcc3d.errors
import hcc3d.file
import hcc3d.hash

if TYPE_CHECKING:
    from hcc3d.file import PathLike

MANIFEST_FILE = "run.json"


class Artifact(msgspec.Struct, frozen=True):
    path: str
    digest: str


class RunManifest(msgspec.Struct, frozen=True):
    command: str
    argv: list[str]
    config_hash: str | None
    seed: int | None
    artifacts: list[Artifact]
    volatile: list[str] = []


def _files(root: pathlib.Path, paths: Iterable[pathlib.Path]) -> list[pathlib.Path]:
    found = set()
    for path in paths:
        if path.is_dir():
            found.update(p for p in path.rglob("*") if p.is_file())
        elif path.is_file():
            found.add(path)
        else:
            raise hcc3d.errors.ArtifactNotFound(f'Artifact "{path}" does not exist.')

    return sorted(found, key=lambda p: p.relative_to(root).as_posix())


def digests(root: pathlib.Path, paths: Iterable[pathlib.Path]) -> list[Artifact]:
    return [
        Artifact(path=file.relative_to(root).as_posix(), digest=hcc3d.hash.file(file))
        for file in _files(root, paths)
    ]


def write(
    out_dir: PathLike,
    *,
    command: str,
    argv: Sequence[str],
    artifacts: Iterable[pathlib.Path],
    volatile: Iterable[pathlib.Path] = (),
    config_hash: str | None = None,
    seed: int | None = None,
) -> RunManifest:
    root = pathlib.Path(out_dir)
    manifest = RunManifest(
        command=command,
        argv=list(argv),
        config_hash=config_hash,
        seed=seed,
        artifacts=digests(root, artifacts),
        volatile=[file.relative_to(root).as_posix() for file in _files(root, volatile)],
    )
    hcc3d.file.write(root / MANIFEST_FILE, msgspec.json.format(msgspec.json.encode(manifest)))
    return manifest


def read(out_dir: PathLike) -> RunManifest:
    path = pathlib.Path(out_dir) / MANIFEST_FILE
    try:
        return msgspec.json.decode(hcc3d.file.read(path), type=RunManifest)
    except (msgspec.DecodeError, msgspec.ValidationError) as exc:
        raise hcc3d.errors.FormatError(f'Invalid run manifest "{path}": {exc}') from exc


def verify(out_dir: PathLike) -> list[str]:
    """Paths whose current digest no longer matches the manifest."""
    root = pathlib.Path(out_dir)
    return [
        artifact.path
        for artifact in read(root).artifacts
        if not (root / artifact.path).is_file()
        or hcc3d.hash.file(root / artifact.path) != artifact.digest
    ]
