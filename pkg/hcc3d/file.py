from __future__ import annotations

import pathlib
from typing import TYPE_CHECKING

import hcc3d.errors

if TYPE_CHECKING:
    from typing import TypeAlias

    PathLike: TypeAlias = pathlib.Path | str


def make_parent_dirs(path: pathlib.Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)


def write(location: PathLike, val: bytes | str) -> None:
    """Write bytes or text to a file, creating parent directories if needed."""
    location_path = pathlib.Path(location)
    writer = location_path.write_text if isinstance(val, str) else location_path.write_bytes
    try:
        writer(val)
    except FileNotFoundError:
        make_parent_dirs(location_path)
        writer(val)


def read(location: PathLike) -> bytes:
    """Read a file, raising a CLI-friendly error when it is missing."""
    location_path = pathlib.Path(location)
    try:
        return location_path.read_bytes()
    except FileNotFoundError as exc:
        raise hcc3d.errors.ArtifactNotFound(f'File "{location_path}" does not exist.') from exc
    except IsADirectoryError as exc:
        raise hcc3d.errors.ArtifactError(f'"{location_path}" is a directory.') from exc


def require_dir(location: PathLike) -> pathlib.Path:
    location_path = pathlib.Path(location)
    if not location_path.is_dir():
        raise hcc3d.errors.ArtifactNotFound(f'Directory "{location_path}" does not exist.')

    return location_path
