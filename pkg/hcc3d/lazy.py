"""Deferred imports for heavy or optional packages."""

import importlib
import types
from typing import Any, Final

_OPTIONAL_EXTRAS: Final = {
    "scipy": "exact",
}


def load(modname: str) -> types.ModuleType:
    """Import a module, explaining how to install it when it is missing."""
    try:
        return importlib.import_module(modname)
    except ModuleNotFoundError as exc:
        package = modname.split(".", 1)[0]
        err_msg = f"{modname} could not be imported."
        if extra := _OPTIONAL_EXTRAS.get(package):
            err_msg += f' Do "pip install hcc3d[{extra}]" or install the {package} package.'
        else:
            err_msg += f" Install the {package} package to use hcc3d."
        raise ModuleNotFoundError(err_msg) from exc


class module:
    """A module proxy that imports on first attribute access."""

    def __init__(self, modname: str) -> None:
        self._modname = modname
        self._mod: types.ModuleType | None = None

    def __getattr__(self, attr: str) -> Any:
        if self._mod is None:
            self._mod = load(self._modname)

        return getattr(self._mod, attr)
