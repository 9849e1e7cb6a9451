"""Manage process-wide run context."""

from __future__ import annotations

import contextlib
import functools
import os
from typing import Any, Iterator

import msgspec
import msgspec.structs

import hcc3d.errors
import hcc3d.unset

THREADS_ENV = "HCC3D__THREADS"


class Hcc3dCtx(msgspec.Struct, forbid_unknown_fields=True, dict=True):
    verbosity: int = 1
    threads: int = msgspec.field(default_factory=lambda: os.cpu_count() or 1)
    # Reduce float32 tensors in float64 before casting back.
    accumulate_f64: bool = False


def _threads_from_env() -> int | hcc3d.unset.UnsetType:
    env_setting = os.environ.get(THREADS_ENV)
    if env_setting is None:
        return hcc3d.unset.UNSET

    try:
        threads = int(env_setting)
    except ValueError as exc:
        raise hcc3d.errors.EnvCast(
            f'Unable to cast env ctx {THREADS_ENV} value "{env_setting}" as int'
        ) from exc

    if threads < 1:
        raise hcc3d.errors.EnvCast(f"{THREADS_ENV} must be at least 1, got {threads}")

    return threads


@functools.cache
def get() -> Hcc3dCtx:
    """Get the context, reading the thread count from the environment once."""
    parsed = Hcc3dCtx()
    if not isinstance(threads := _threads_from_env(), hcc3d.unset.UnsetType):
        parsed.threads = threads

    return parsed


@contextlib.contextmanager
def set_vars(**vars: Any) -> Iterator[None]:
    curr_vars = get()
    old_vars = msgspec.structs.replace(curr_vars)
    for name, val in vars.items():
        if not isinstance(val, hcc3d.unset.UnsetType):
            setattr(curr_vars, name, val)

    try:
        yield
    finally:
        for name in old_vars.__struct_fields__:
            setattr(curr_vars, name, getattr(old_vars, name))
