"""Core hashing functions."""

from __future__ import annotations

import pathlib

import msgspec
import msgspec.json
import xxhash


def blob(content: bytes) -> str:
    """A git-style content digest.

    The content is framed as `blob <len>\\0<content>` before hashing so digests
    only match for byte-identical files.
    """
    return xxhash.xxh128_hexdigest(b"blob %d\0" % len(content) + content)


def file(path: pathlib.Path) -> str:
    return blob(path.read_bytes())


def config(struct: msgspec.Struct) -> str:
    """Hash the canonical JSON encoding of a config struct."""
    return xxhash.xxh128_hexdigest(msgspec.json.encode(struct))


def seed(*parts: str | bytes | int) -> int:
    """Derive a 64-bit seed from arbitrary parts."""
    hasher = xxhash.xxh64()
    for part in parts:
        hasher.update(part if isinstance(part, bytes) else str(part).encode())
        hasher.update(b"\0")

    return hasher.intdigest()
