import contextlib
import sys
from typing import TYPE_CHECKING, Iterator

import hcc3d.console

if TYPE_CHECKING:
    import hcc3d.ctx as hcc3d_ctx
else:
    import hcc3d.lazy

    hcc3d_ctx = hcc3d.lazy.module("hcc3d.ctx")


class Error(Exception):
    code = "general"
    exit_code = 1


class CheckFailure(Error):
    """A verification (such as a gradient check) did not meet its tolerance."""

    code = "check0"
    exit_code = 1


class UsageError(Error):
    """Bad command-line usage. Exits like argparse does."""

    code = "usage0"
    exit_code = 2


class ConfigError(UsageError):
    code = "conf0"


class ConfigParse(ConfigError):
    code = "conf1"


class UnknownStrategy(UsageError):
    code = "usage1"


class ArgumentError(UsageError):
    code = "num0"


class ContractError(UsageError):
    code = "num1"


class EnvCast(UsageError):
    code = "ctx0"


class ArtifactError(Error):
    """Problems reading, writing or validating files on disk."""

    code = "io0"
    exit_code = 3


class ArtifactNotFound(ArtifactError):
    code = "io1"


class FormatError(ArtifactError):
    code = "fmt0"


class ShapeError(ArtifactError):
    code = "fmt1"


class DimensionError(ArtifactError):
    code = "num2"


class InputError(ArtifactError):
    code = "num3"


class NonFiniteError(InputError):
    code = "num4"


class TrainingError(Error):
    """Training diverged."""

    code = "train0"
    exit_code = 4


class InstabilityError(Error):
    """Top-K selection kept changing under finite-difference perturbation."""

    code = "grad0"
    exit_code = 5


def fmt_msg(exc: Exception, prefix: str = "") -> str:
    if isinstance(exc, Error):
        return hcc3d.console.fmt_msg(
            f"{prefix}{exc.args[0]} [reset][dim]See docs/errors.md#{exc.code}[/dim]",
            emoji="broken_heart",
            color="red",
        )
    else:
        return hcc3d.console.fmt_msg(
            "An unexpected error happened", emoji="broken_heart", color="red"
        )


def print(exc: Exception, prefix: str = "") -> None:
    msg = fmt_msg(exc, prefix=prefix)
    hcc3d.console.get().print(msg)
    if not isinstance(exc, Error) or hcc3d_ctx.get().verbosity >= 3:
        hcc3d.console.print_exception()


@contextlib.contextmanager
def catch_and_exit() -> Iterator[None]:
    try:
        yield
    except Error as e:
        print(e)
        sys.exit(e.exit_code)
