"""Sentinel for values a caller did not supply.

CLI flags default to `UNSET` so that a flag only overrides a JSON config value
when it was actually passed.
"""

from typing import Any, TypeAlias

UnsetType: TypeAlias = frozenset

UNSET = frozenset([None])


def is_unset(val: Any) -> bool:
    return isinstance(val, UnsetType)


def supplied(**kwargs: Any) -> dict[str, Any]:
    """Drop unset keyword values."""
    return {key: val for key, val in kwargs.items() if not isinstance(val, UnsetType)}
