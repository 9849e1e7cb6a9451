from __future__ import annotations

import argparse
import pathlib
import sys
from typing import Any, Callable, Iterable, Sequence

import msgspec
import msgspec.json
import msgspec.structs

import hcc3d.ablation
import hcc3d.conf
import hcc3d.console
import hcc3d.costmodel
import hcc3d.ctx
import hcc3d.errors
import hcc3d.file
import hcc3d.gradcheck
import hcc3d.hash
import hcc3d.hcct
import hcc3d.logger
import hcc3d.manifest
import hcc3d.pipeline
import hcc3d.trace
import hcc3d.unset
import hcc3d.version
from hcc3d.ablation import AblationReport, AblationTiming, Trial
from hcc3d.conf import HCCConfig
from hcc3d.toytask import data, train
from hcc3d.unset import UNSET

GRADCHECK_FILE = "gradcheck.json"


###
# Shared flags
###


def _add_config_args(parser: argparse.ArgumentParser, preset: str) -> None:
    group = parser.add_argument_group("module config")
    group.add_argument(
        "--preset", default=preset, choices=list(hcc3d.conf.PRESETS), help="Base config."
    )
    group.add_argument("--config", help="JSON config overriding the preset.")
    group.add_argument("--d-init", type=int, default=UNSET, help="Encoder feature width.")
    group.add_argument("--d", type=int, default=UNSET, help="Module width.")
    group.add_argument("--heads", type=int, default=UNSET, help="Attention heads.")
    group.add_argument("--n-g", type=int, default=UNSET, help="Global queries.")
    group.add_argument("--n-d", type=int, default=UNSET, help="Detail queries.")
    group.add_argument("-k", "--top-k", type=int, default=UNSET, help="Tokens kept by Top-K.")
    group.add_argument("--lambda", dest="lam", type=float, default=UNSET, help="Coverage decay.")
    group.add_argument("--temperature", type=float, default=UNSET)
    group.add_argument("--selection", default=UNSET, choices=hcc3d.conf.SELECTIONS)
    group.add_argument("--projector", default=UNSET, choices=["linear", "mlp"])
    group.add_argument("--dtype", default=UNSET, choices=["float32", "float64"])
    group.add_argument("--seed", type=int, default=UNSET, help="Parameter seed.")


def _config(args: argparse.Namespace) -> HCCConfig:
    return hcc3d.conf.resolve(
        preset=args.preset,
        path=args.config,
        d_init=args.d_init,
        d=args.d,
        H=args.heads,
        n_g=args.n_g,
        n_d=args.n_d,
        K=args.top_k,
        lam=args.lam,
        temperature=args.temperature,
        selection=args.selection,
        projector=args.projector,
        dtype=args.dtype,
        seed=args.seed,
    )


def _add_task_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--m", type=int, default=UNSET, help="Encoder tokens per sample.")
    group.add_argument("--epochs", type=int, default=UNSET)
    group.add_argument("--batch-size", type=int, default=UNSET)
    group.add_argument("--optimizer", default=UNSET, choices=["adam", "momentum"])
    group.add_argument("--lr", type=float, default=UNSET)
    group.add_argument("--val-fraction", type=float, default=UNSET)
    group.add_argument("--task-seed", type=int, default=UNSET, help="Encoding and split seed.")
    group.add_argument(
        "--progress", action="store_true", help="Show a live progress bar while training."
    )


def _task(args: argparse.Namespace) -> train.TaskConfig:
    return train.TaskConfig(
        **hcc3d.unset.supplied(
            m=args.m,
            epochs=args.epochs,
            batch_size=args.batch_size,
            optimizer=args.optimizer,
            lr=args.lr,
            val_fraction=args.val_fraction,
            seed=args.task_seed,
        )
    )


def _manifest(
    out_dir: pathlib.Path,
    args: argparse.Namespace,
    artifacts: Iterable[pathlib.Path],
    *,
    volatile: Iterable[pathlib.Path] = (),
    config: HCCConfig | None = None,
    seed: int | None = None,
) -> None:
    hcc3d.manifest.write(
        out_dir,
        command=args.command,
        argv=args.argv,
        artifacts=artifacts,
        volatile=volatile,
        config_hash=hcc3d.hash.config(config) if config else None,
        seed=config.seed if seed is None and config else seed,
    )


def _load_samples(path: str) -> list[data.ToySample]:
    _, samples = data.load(path)
    return samples


def _train_artifacts(
    clf: train.Classifier,
    report: train.TrainReport,
    timing: train.TrainTiming,
    out_dir: pathlib.Path,
    args: argparse.Namespace,
) -> None:
    written = train.write(clf, report, timing, out_dir)
    _manifest(
        out_dir,
        args,
        [written["checkpoint"], written["report"], written["csv"]],
        volatile=[written["timing"], out_dir / hcc3d.logger.LOG_FILE],
        config=report.config,
    )


def _print_ablation(
    report: AblationReport, timing: AblationTiming | None, title: str
) -> None:
    hcc3d.console.table(
        title, hcc3d.ablation.TABLE_COLUMNS, hcc3d.ablation.table_rows(report, timing)
    )


def _run_ablation(
    args: argparse.Namespace,
    kind: hcc3d.ablation.AblationKind,
    trials: list[Trial],
    task: train.TaskConfig,
    mode: hcc3d.pipeline.AblationMode = "both",
) -> tuple[AblationReport, AblationTiming | None]:
    out_dir = pathlib.Path(args.out)
    timing: AblationTiming | None = None
    if args.dry_run:
        rows = hcc3d.ablation.run_trials(
            trials, lambda trial: hcc3d.ablation.dry_run(trial, task.m)
        )
    else:
        if args.data is None:
            raise hcc3d.errors.UsageError("--data is required unless --dry-run is given.")

        samples = _load_samples(args.data)

        def run_trial(trial: Trial) -> tuple[hcc3d.ablation.AblationRow, float]:
            trial_dir = out_dir / trial.label
            # Trials share the console, so each logs only to its own directory.
            clf, report, timing = train.train(
                trial.config,
                task,
                samples,
                mode=mode,
                logger=hcc3d.logger.Logger(),
                out_dir=trial_dir,
            )
            _train_artifacts(clf, report, timing, trial_dir, args)
            row = hcc3d.ablation.row(
                trial,
                tokens_in=report.tokens_in,
                tokens_out=report.tokens_out,
                train_accuracy=report.train_accuracy,
                val_accuracy=report.val_accuracy,
            )
            return row, timing.total_seconds

        results = hcc3d.ablation.run_trials(trials, run_trial)
        rows = [row for row, _ in results]
        timing = AblationTiming(
            labels=[trial.label for trial in trials],
            train_seconds=[seconds for _, seconds in results],
        )

    report = AblationReport(kind=kind, dry_run=args.dry_run, rows=rows)
    written = hcc3d.ablation.write(report, out_dir)
    volatile = [hcc3d.ablation.write_timing(timing, out_dir)] if timing else []
    _manifest(out_dir, args, written, volatile=volatile, seed=task.seed)
    return report, timing


###
# Commands
###


def cmd_gen_data(args: argparse.Namespace) -> None:
    out_dir = pathlib.Path(args.out)
    samples = data.gen_dataset(args.classes, args.per_class, args.points, args.seed)
    data.save(samples, out_dir, seed=args.seed)
    _manifest(
        out_dir, args, [out_dir / data.POINTS_FILE, out_dir / data.LABELS_FILE], seed=args.seed
    )
    hcc3d.console.print(
        f"Wrote {len(samples)} samples of {args.classes} classes to {out_dir}",
        emoji="package",
        color="green",
    )


def cmd_init(args: argparse.Namespace) -> None:
    config = _config(args)
    out_dir = pathlib.Path(args.out)
    saved = hcc3d.pipeline.save(hcc3d.pipeline.build(config), out_dir)
    _manifest(
        out_dir,
        args,
        [out_dir / hcc3d.pipeline.MANIFEST_FILE, *(out_dir / p.file for p in saved.parameters)],
        config=config,
    )
    hcc3d.console.print(
        f"Saved {saved.num_parameters:,} parameters to {out_dir}", emoji="package", color="green"
    )


def cmd_train(args: argparse.Namespace) -> None:
    config = _config(args)
    task = _task(args)

    if args.sweep is not None:
        kind, settings = args.sweep
        if kind != "queries":
            raise hcc3d.errors.UsageError(f'Unknown sweep "{kind}". Only "queries" is supported.')

        trials = hcc3d.ablation.query_trials(config, settings)
        report, timing = _run_ablation(args, "queries", trials, task, mode=args.mode)
        _print_ablation(report, timing, "Global and detail query counts")
        return

    if args.dry_run:
        raise hcc3d.errors.UsageError("--dry-run only applies to sweeps.")
    if args.data is None:
        raise hcc3d.errors.UsageError("--data is required.")

    out_dir = pathlib.Path(args.out)
    samples = _load_samples(args.data)
    logger = hcc3d.logger.create("progress" if args.progress else "stdout")
    clf, report, timing = train.train(
        config, task, samples, mode=args.mode, logger=logger, out_dir=out_dir
    )
    _train_artifacts(clf, report, timing, out_dir, args)

    val = "-" if report.val_accuracy is None else f"{report.val_accuracy:.3f}"
    hcc3d.console.print(
        f"{args.mode}: {report.tokens_in} -> {report.tokens_out} tokens, "
        f"train {report.train_accuracy:.3f}, val {val}",
        emoji="white_check_mark",
        color="green",
    )


def cmd_compress(args: argparse.Namespace) -> None:
    module = hcc3d.pipeline.load(args.ckpt)
    x = hcc3d.hcct.read(args.input)
    z, trace = hcc3d.pipeline.hcc_forward(module, x)
    out_dir = pathlib.Path(args.out)
    index = hcc3d.trace.save(trace, out_dir, config=module.config)
    _manifest(
        out_dir,
        args,
        [
            out_dir / hcc3d.trace.INDEX_FILE,
            *(out_dir / f"{name}.hcct" for name in hcc3d.trace.TENSORS),
        ],
        config=module.config,
    )
    hcc3d.console.print(f"{index.tokens_in} → {index.tokens_out} ({index.reduction:.2%})")


def _inspect_tensor(path: pathlib.Path) -> None:
    value = hcc3d.hcct.read(path)
    hcc3d.console.table(
        str(path),
        ("Shape", "Dtype", "Digest"),
        [(value.shape, value.dtype, hcc3d.hash.file(path))],
    )


def _inspect_checkpoint(root: pathlib.Path) -> None:
    saved = hcc3d.pipeline.read_manifest(root)
    hcc3d.console.table(
        f"Checkpoint {root} ({saved.num_parameters:,} parameters)",
        ("Parameter", "Shape", "Dtype"),
        [(p.name, tuple(p.shape), p.dtype) for p in saved.parameters],
    )
    config = msgspec.structs.asdict(saved.config)
    hcc3d.console.table("Config", ("Field", "Value"), config.items())


def _inspect_trace(root: pathlib.Path) -> None:
    index = hcc3d.trace.load_index(root)
    hcc3d.console.print(
        f"{index.tokens_in} → {index.tokens_out} ({index.reduction:.2%}), "
        f"{len(index.selected)} tokens selected"
    )
    hcc3d.console.print(f"Selected: {' '.join(str(i) for i in index.selected)}")


def _inspect_dataset(root: pathlib.Path) -> None:
    index, samples = data.load(root)
    counts = [index.labels.count(label) for label in range(len(index.classes))]
    hcc3d.console.table(
        f"Dataset {root} ({len(samples)} samples, {index.points} points each)",
        ("Class", "Samples"),
        zip(index.classes, counts),
    )


def cmd_inspect(args: argparse.Namespace) -> None:
    path = pathlib.Path(args.path)
    if path.is_file():
        _inspect_tensor(path)
        return

    root = hcc3d.file.require_dir(path)
    found = False
    for marker, inspect in (
        (hcc3d.pipeline.MANIFEST_FILE, _inspect_checkpoint),
        (hcc3d.trace.INDEX_FILE, _inspect_trace),
        (data.LABELS_FILE, _inspect_dataset),
    ):
        if (root / marker).is_file():
            inspect(root)
            found = True

    if (root / hcc3d.manifest.MANIFEST_FILE).is_file():
        found = True
        run = hcc3d.manifest.read(root)
        if changed := hcc3d.manifest.verify(root):
            raise hcc3d.errors.CheckFailure(
                f"Artifacts of {run.command} no longer match run.json: {', '.join(changed)}."
            )

        hcc3d.console.print(
            f"{len(run.artifacts)} artifacts of {run.command} match run.json",
            emoji="white_check_mark",
            color="green",
        )

    if not found:
        raise hcc3d.errors.ArtifactNotFound(f'Nothing to inspect in "{root}".')


def cmd_gradcheck(args: argparse.Namespace) -> None:
    config = _config(args)
    report = hcc3d.gradcheck.run(
        config,
        m=args.m,
        tolerance=args.tolerance,
        step=args.step,
        params=args.params or (),
        entries=args.entries,
        retries=args.retries,
        seed=args.input_seed,
    )
    hcc3d.console.table(
        f"Gradient check (m={report.m}, tolerance={report.tolerance:g})",
        ("Parameter", "Entries", "Skipped", "Max rel. error", "Status"),
        [
            (
                check.name,
                check.checked,
                check.skipped,
                f"{check.max_error:.2e}",
                "[green]pass" if check.passed else "[red]fail",
            )
            for check in report.params
        ],
    )

    if args.out is not None:
        out_dir = pathlib.Path(args.out)
        hcc3d.file.write(
            out_dir / GRADCHECK_FILE, msgspec.json.format(msgspec.json.encode(report))
        )
        _manifest(out_dir, args, [out_dir / GRADCHECK_FILE], config=config)

    if not report.passed:
        failed = [check.name for check in report.params if not check.passed]
        raise hcc3d.errors.CheckFailure(
            f"{len(failed)} parameters exceed the tolerance: {', '.join(failed)}."
        )


def cmd_cost(args: argparse.Namespace) -> None:
    config = _config(args)
    spec = (
        hcc3d.costmodel.phi2_like()
        if args.spec is None
        else hcc3d.costmodel.load_spec(args.spec)
    )
    if not hcc3d.unset.is_unset(args.decode_tokens):
        spec = hcc3d.costmodel.CostModelSpec(
            **(msgspec.structs.asdict(spec) | {"decode_tokens": args.decode_tokens})
        )

    report = hcc3d.costmodel.compare(
        spec,
        config,
        args.tokens_in,
        text_tokens=args.text_tokens,
        tokens_out=args.tokens_out,
    )
    hcc3d.console.table(
        f"Modeled cost, {report.tokens_in} visual + {report.text_tokens} text tokens",
        ("Visual tokens", "Encoder", "HCC", "LLM", "LLM vs. uncompressed", "Reduction"),
        [
            (
                row.visual_tokens,
                f"{row.encoder_share:.1%}",
                f"{row.module_share:.1%}",
                f"{row.llm_share:.1%}",
                f"{row.llm_flops_ratio:.3f}",
                f"{row.token_reduction:.4f}",
            )
            for row in report.rows
        ],
    )
    for row in report.rows:
        if row.visual_tokens != report.tokens_in:
            hcc3d.console.print(
                f"{report.tokens_in} → {row.visual_tokens}: token reduction "
                f"{row.token_reduction:.4f} ({row.token_reduction:.2%})",
                emoji="chart_increasing",
            )

    if args.out is not None:
        out_dir = pathlib.Path(args.out)
        hcc3d.costmodel.write(report, out_dir)
        _manifest(
            out_dir,
            args,
            [out_dir / hcc3d.costmodel.REPORT_FILE, out_dir / hcc3d.costmodel.REPORT_CSV],
            config=config,
        )


def cmd_selection_ablation(args: argparse.Namespace) -> None:
    config = _config(args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    trials = hcc3d.ablation.selection_trials(config, strategies)
    report, timing = _run_ablation(args, "selection", trials, _task(args))
    _print_ablation(report, timing, "Feature selection strategy")


###
# Entrypoint
###


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcc3d", description="Hierarchical visual token compression."
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {hcc3d.version.__version__}"
    )
    parser.add_argument(
        "-v",
        "--verbosity",
        nargs="?",
        const=2,
        default=UNSET,
        type=int,
        help="Set verbosity (1 by default, 2 if -v is present, or specify level)",
    )
    parser.add_argument(
        "-n", "--threads", type=int, default=UNSET, help="Worker threads for sweeps."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add(name: str, fn: Callable[[argparse.Namespace], None], help: str) -> Any:
        sub = subparsers.add_parser(name, help=help)
        sub.set_defaults(func=fn)
        return sub

    sub = add("gen-data", cmd_gen_data, "Generate a synthetic shape dataset.")
    sub.add_argument("--classes", type=int, default=8)
    sub.add_argument("--per-class", type=int, default=200)
    sub.add_argument("--points", type=int, default=512)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)

    sub = add("init", cmd_init, "Save a freshly initialized checkpoint.")
    _add_config_args(sub, preset="full")
    sub.add_argument("--out", required=True)

    sub = add("train", cmd_train, "Train on a synthetic dataset.")
    _add_config_args(sub, preset="desk")
    _add_task_args(sub)
    sub.add_argument("--data", help="Dataset directory.")
    sub.add_argument("--out", required=True)
    sub.add_argument("--mode", default="both", choices=hcc3d.pipeline.ABLATION_MODES)
    sub.add_argument(
        "--sweep",
        nargs=2,
        metavar=("KIND", "SETTINGS"),
        help='Train one run per setting, e.g. --sweep queries "4,2,48;8,4,96".',
    )
    sub.add_argument(
        "--dry-run", action="store_true", help="Build and run each sweep setting once."
    )

    sub = add("compress", cmd_compress, "Compress encoder features with a checkpoint.")
    sub.add_argument("--ckpt", required=True)
    sub.add_argument("--in", dest="input", required=True, help="HCCT tensor of shape (m, d_init).")
    sub.add_argument("--out", required=True)

    sub = add("inspect", cmd_inspect, "Describe a checkpoint, trace, dataset or tensor.")
    sub.add_argument("path")

    sub = add("gradcheck", cmd_gradcheck, "Check gradients against finite differences.")
    _add_config_args(sub, preset="gradcheck")
    sub.add_argument("--m", type=int, default=24)
    sub.add_argument("--tolerance", type=float, default=hcc3d.gradcheck.DEFAULT_TOLERANCE)
    sub.add_argument("--step", type=float, default=hcc3d.gradcheck.DEFAULT_STEP)
    sub.add_argument(
        "--param", action="append", dest="params", help="Check parameters under this name."
    )
    sub.add_argument("--entries", type=int, default=8, help="Entries checked per parameter.")
    sub.add_argument("--retries", type=int, default=3)
    sub.add_argument("--input-seed", type=int, default=0)
    sub.add_argument("--out")

    sub = add("cost", cmd_cost, "Model inference cost with and without compression.")
    _add_config_args(sub, preset="full")
    sub.add_argument("--spec", help="Cost model JSON.")
    sub.add_argument("--tokens-in", type=int, default=513)
    sub.add_argument("--tokens-out", type=int, action="append")
    sub.add_argument("--text-tokens", type=int)
    sub.add_argument("--decode-tokens", type=int, default=UNSET)
    sub.add_argument("--out")

    sub = add(
        "selection-ablation", cmd_selection_ablation, "Compare feature selection strategies."
    )
    _add_config_args(sub, preset="desk")
    _add_task_args(sub)
    sub.add_argument("--data", help="Dataset directory.")
    sub.add_argument("--out", required=True)
    sub.add_argument("--strategies", default=",".join(hcc3d.ablation.STRATEGY_LABELS))
    sub.add_argument(
        "--dry-run", action="store_true", help="Build and run each strategy once."
    )

    return parser


@hcc3d.errors.catch_and_exit()
def main(argv: Sequence[str] | None = None) -> None:
    """The entrypoint into the hcc3d CLI."""
    argv = list(sys.argv[1:] if argv is None else argv)
    args = _parser().parse_args(argv)
    args.argv = argv

    with hcc3d.ctx.set_vars(verbosity=args.verbosity, threads=args.threads):
        if not hcc3d.unset.is_unset(args.threads) and args.threads < 1:
            raise hcc3d.errors.UsageError("--threads must be at least 1.")

        args.func(args)
