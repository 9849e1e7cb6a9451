from __future__ import annotations

import contextlib
import pathlib
from typing import IO, TYPE_CHECKING, Iterator, Literal, TypeAlias

import hcc3d.console
import hcc3d.ctx
import hcc3d.file

if TYPE_CHECKING:
    import rich.live as rich_live
    import rich.progress as rich_progress
    import rich.table as rich_table

    from hcc3d.console import Color, Emoji
    from hcc3d.toytask.train import EpochStats
else:
    import hcc3d.lazy

    rich_live = hcc3d.lazy.module("rich.live")
    rich_progress = hcc3d.lazy.module("rich.progress")
    rich_table = hcc3d.lazy.module("rich.table")

RunStatus: TypeAlias = Literal["success", "failed", "pending"]
LOG_FILE = "train.out"


def fmt_epoch(stats: EpochStats, epochs: int) -> str:
    width = len(str(epochs))
    msg = (
        f"epoch {stats.epoch + 1:>{width}}/{epochs} "
        f"loss {stats.loss:.4f} train {stats.train_accuracy:.3f}"
    )
    if stats.val_accuracy is not None:
        msg += f" val {stats.val_accuracy:.3f}"

    return msg


class Logger:
    """Reports one training run.

    Every line is also written to `train.out` in the run's output directory.
    Subclasses decide what reaches the console.
    """

    def __init__(self) -> None:
        self.name = ""
        self.epochs = 0
        self.status: RunStatus = "pending"
        self._log_file: IO[str] | None = None

    @contextlib.contextmanager
    def run(self, name: str, *, epochs: int, out_dir: pathlib.Path | None = None) -> Iterator[None]:
        self.name = name
        self.epochs = epochs
        self.status = "pending"
        if out_dir is not None:
            hcc3d.file.make_parent_dirs(out_dir / LOG_FILE)
            self._log_file = (out_dir / LOG_FILE).open("w")

        self.handle_run_started()
        try:
            yield
        except BaseException:
            self.status = "failed"
            raise
        else:
            self.status = "success"
        finally:
            self.handle_run_finished()
            if self._log_file:
                self._log_file.close()
                self._log_file = None

    def _log(self, msg: str) -> None:
        if self._log_file:
            self._log_file.write(msg + "\n")

    def print(self, msg: str, emoji: Emoji | None = None, color: Color | None = None) -> None:
        self._log(msg)
        self.handle_output(msg, emoji=emoji, color=color)

    def epoch(self, stats: EpochStats) -> None:
        self._log(fmt_epoch(stats, self.epochs))
        self.handle_epoch(stats)

    def handle_run_started(self) -> None:
        pass

    def handle_run_finished(self) -> None:
        pass

    def handle_output(self, msg: str, emoji: Emoji | None = None, color: Color | None = None) -> None:
        pass

    def handle_epoch(self, stats: EpochStats) -> None:
        pass


class Stdout(Logger):
    """Prints one line per epoch."""

    def handle_run_started(self) -> None:
        if hcc3d.ctx.get().verbosity:
            hcc3d.console.rule(self.name, emoji="construction", color="cyan")

    def handle_output(self, msg: str, emoji: Emoji | None = None, color: Color | None = None) -> None:
        if hcc3d.ctx.get().verbosity:
            hcc3d.console.print(msg, emoji=emoji, color=color)

    def handle_epoch(self, stats: EpochStats) -> None:
        if hcc3d.ctx.get().verbosity:
            hcc3d.console.print(fmt_epoch(stats, self.epochs), emoji="chart_increasing")


class Progress(Logger):
    """A live progress bar across epochs, with the epoch log printed at the end."""

    def generate_table(self) -> rich_table.Table:
        table = rich_table.Table.grid(padding=(0, 1))
        table.add_row(self.progress)
        return table

    def handle_run_started(self) -> None:
        self.progress = rich_progress.Progress(
            rich_progress.TextColumn("{task.description}"),
            rich_progress.BarColumn(complete_style="cyan"),
            rich_progress.MofNCompleteColumn(),
            expand=True,
        )
        self.task = self.progress.add_task(
            f":construction-emoji: [bold blue]{self.name}", total=self.epochs
        )
        self.captured: list[str] = []
        self.live = rich_live.Live(
            self.generate_table(), refresh_per_second=10, console=hcc3d.console.get()
        )
        self.live.start()

    def handle_output(self, msg: str, emoji: Emoji | None = None, color: Color | None = None) -> None:
        self.captured.append(hcc3d.console.fmt_msg(msg, emoji=emoji, color=color))

    def handle_epoch(self, stats: EpochStats) -> None:
        self.captured.append(fmt_epoch(stats, self.epochs))
        self.progress.update(self.task, advance=1)
        self.live.update(self.generate_table())

    def handle_run_finished(self) -> None:
        match self.status:
            case "success":
                status = ":white_check_mark-emoji: [green]"
            case _:
                status = ":broken_heart-emoji: [red]"

        self.progress.update(self.task, description=f"{status}{self.name}")
        self.live.update(self.generate_table())
        self.live.stop()

        verbosity = hcc3d.ctx.get().verbosity
        if verbosity > 1 or (verbosity and self.status == "failed"):
            hcc3d.console.rule(self.name, color="green" if self.status == "success" else "red")
            hcc3d.console.print("\n".join(self.captured) or "[dim][italic]No output")


def create(kind: Literal["stdout", "progress"] = "stdout") -> Logger:
    return Progress() if kind == "progress" else Stdout()
