"""Query-count sweeps and selection-strategy comparisons.

Each trial is a config trained (or, in a dry run, built and run forward once)
in its own output directory. Trials run in a thread pool sized by the
context's thread count; results keep the order trials were requested in.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import pathlib
from typing import TYPE_CHECKING, Callable, Literal, Sequence, TypeAlias, TypeVar

import msgspec
import msgspec.json

import hcc3d.conf
import hcc3d.ctx
import hcc3d.errors
import hcc3d.file
import hcc3d.pipeline
import hcc3d.rng
from hcc3d.conf import HCCConfig, Selection
from hcc3d.tensor import Tensor

if TYPE_CHECKING:
    from hcc3d.file import PathLike

AblationKind: TypeAlias = Literal["queries", "selection"]
T = TypeVar("T")
REPORT_FILE = "ablation.json"
REPORT_CSV = "ablation.csv"
TIMING_FILE = "ablation_timing.json"

STRATEGY_LABELS: dict[Selection, str] = {
    "select_all": "Select all",
    "random": "Random",
    "attention_only": "Attention-only",
    "mlp_only": "MLP-only",
    "adm": "ADM (Full)",
}


class Trial(msgspec.Struct, frozen=True):
    label: str
    config: HCCConfig


class AblationRow(msgspec.Struct, frozen=True):
    label: str
    n_g: int
    n_d: int
    K: int
    selection: Selection
    tokens_in: int
    tokens_out: int
    train_accuracy: float | None = None
    val_accuracy: float | None = None


class AblationReport(msgspec.Struct, frozen=True):
    kind: AblationKind
    dry_run: bool
    rows: list[AblationRow]


class AblationTiming(msgspec.Struct, frozen=True):
    """Wall-clock training seconds per trial, in row order."""

    labels: list[str]
    train_seconds: list[float]


def parse_queries(spec: str) -> list[tuple[int, int, int | None]]:
    """Parse "n_g,n_d[,K];..." into (n_g, n_d, K or None) triples."""
    settings = []
    for part in filter(None, (chunk.strip() for chunk in spec.split(";"))):
        try:
            vals = [int(val) for val in part.split(",")]
        except ValueError:
            raise hcc3d.errors.UsageError(f'Invalid query setting "{part}".') from None

        if len(vals) not in (2, 3):
            raise hcc3d.errors.UsageError(f'Query setting "{part}" needs n_g,n_d[,K].')

        settings.append((vals[0], vals[1], vals[2] if len(vals) == 3 else None))

    if not settings:
        raise hcc3d.errors.UsageError("Query sweep is empty.")

    return settings


def query_trials(base: HCCConfig, spec: str) -> list[Trial]:
    trials = []
    for n_g, n_d, k in parse_queries(spec):
        config = hcc3d.conf.override(base, n_g=n_g, n_d=n_d, K=base.K if k is None else k)
        trials.append(Trial(label=f"ng{n_g}-nd{n_d}-k{config.K}", config=config))

    return trials


def strategy_config(base: HCCConfig, strategy: str) -> HCCConfig:
    """Detail token counts follow the strategy: K for select_all, K/4 for random."""
    if strategy not in STRATEGY_LABELS:
        raise hcc3d.errors.UnknownStrategy(
            f'Unknown selection strategy "{strategy}". '
            f"Choose from {', '.join(STRATEGY_LABELS)}."
        )

    n_d = {"select_all": base.K, "random": max(1, base.K // 4)}.get(strategy, base.n_d)
    return hcc3d.conf.override(base, selection=strategy, n_d=n_d)


def selection_trials(base: HCCConfig, strategies: Sequence[str]) -> list[Trial]:
    return [
        Trial(label=strategy, config=strategy_config(base, strategy)) for strategy in strategies
    ]


def dry_run(trial: Trial, m: int) -> AblationRow:
    """Build the trial's module and compress one random input.

    m is raised to the smallest count the config accepts.
    """
    config = trial.config
    m = max(m, config.K, config.n_g + 1)
    module = hcc3d.pipeline.build(config)
    x = Tensor(hcc3d.rng.Rng(config.seed).normal((m, config.d_init)), dtype=config.dtype)
    z, _ = hcc3d.pipeline.hcc_forward(module, x)
    return row(trial, tokens_in=m, tokens_out=z.shape[0])


def row(
    trial: Trial,
    *,
    tokens_in: int,
    tokens_out: int,
    train_accuracy: float | None = None,
    val_accuracy: float | None = None,
) -> AblationRow:
    config = trial.config
    return AblationRow(
        label=trial.label,
        n_g=config.n_g,
        n_d=config.n_d,
        K=config.K,
        selection=config.selection,
        tokens_in=tokens_in,
        tokens_out=tokens_out,
        train_accuracy=train_accuracy,
        val_accuracy=val_accuracy,
    )


def run_trials(trials: Sequence[Trial], fn: Callable[[Trial], T]) -> list[T]:
    threads = min(hcc3d.ctx.get().threads, max(len(trials), 1))
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, trials))


def table_rows(
    report: AblationReport, timing: AblationTiming | None = None
) -> list[list[str]]:
    def fmt(val: float | None) -> str:
        return "-" if val is None else f"{val:.3f}"

    seconds: list[float | None] = (
        list(timing.train_seconds) if timing else [None] * len(report.rows)
    )
    return [
        [
            STRATEGY_LABELS[r.selection] if report.kind == "selection" else r.label,
            str(r.n_g),
            str(r.n_d),
            str(r.K),
            str(r.tokens_out),
            fmt(r.val_accuracy),
            "-" if secs is None else f"{secs:.1f}s",
        ]
        for r, secs in zip(report.rows, seconds, strict=True)
    ]


TABLE_COLUMNS = ("Setting", "n_g", "n_d", "K", "Tokens", "Val accuracy", "Train time")


def report_csv(report: AblationReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    fields = AblationRow.__struct_fields__
    writer.writerow(fields)
    for r in report.rows:
        writer.writerow(["" if getattr(r, f) is None else getattr(r, f) for f in fields])

    return buf.getvalue()


def write(report: AblationReport, out_dir: PathLike) -> list[pathlib.Path]:
    root = pathlib.Path(out_dir)
    hcc3d.file.write(root / REPORT_FILE, msgspec.json.format(msgspec.json.encode(report)))
    hcc3d.file.write(root / REPORT_CSV, report_csv(report))
    return [root / REPORT_FILE, root / REPORT_CSV]


def write_timing(timing: AblationTiming, out_dir: PathLike) -> pathlib.Path:
    path = pathlib.Path(out_dir) / TIMING_FILE
    hcc3d.file.write(path, msgspec.json.format(msgspec.json.encode(timing)))
    return path
