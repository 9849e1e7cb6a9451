"""Train the compression module on the synthetic classification task.

The classifier is the compression module (or one of its ablations), a mean
pool over the output tokens and a linear head, trained with cross-entropy.
One sample is one token set; a batch is an outer loop accumulating gradients.
"""

from __future__ import annotations

import csv
import io
import math
import pathlib
import time
from typing import TYPE_CHECKING, Sequence

import msgspec
import msgspec.json
import msgspec.structs
import numpy as np

import hcc3d.errors
import hcc3d.file
import hcc3d.hash
import hcc3d.logger
import hcc3d.optim
import hcc3d.pipeline
import hcc3d.rng
import hcc3d.tensor
from hcc3d.conf import HCCConfig
from hcc3d.layers import Linear, Module
from hcc3d.optim import OptimizerName
from hcc3d.pipeline import AblationMode
from hcc3d.tensor import Tensor
from hcc3d.toytask import data

if TYPE_CHECKING:
    from hcc3d.toytask.data import ToySample

REPORT_FILE = "report.json"
REPORT_CSV = "report.csv"
TIMING_FILE = "timing.json"
CHECKPOINT_DIR = "checkpoint"


class TaskConfig(msgspec.Struct, frozen=True, forbid_unknown_fields=True, kw_only=True):
    classes: int = 8
    per_class: int = 200
    points: int = 512
    m: int = 64
    epochs: int = 10
    batch_size: int = 16
    optimizer: OptimizerName = "adam"
    lr: float = 3e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        for field in ("classes", "per_class", "points", "m", "batch_size"):
            if getattr(self, field) < 1:
                raise hcc3d.errors.ConfigError(f"{field} must be at least 1.")
        if self.epochs < 0:
            raise hcc3d.errors.ConfigError("epochs must not be negative.")


class EpochStats(msgspec.Struct, frozen=True):
    epoch: int
    loss: float
    train_accuracy: float
    val_accuracy: float | None = None
    val_loss: float | None = None


class Evaluation(msgspec.Struct, frozen=True):
    loss: float
    accuracy: float
    confusion: list[list[int]]


class TrainReport(msgspec.Struct, frozen=True):
    mode: AblationMode
    config: HCCConfig
    config_hash: str
    task: TaskConfig
    classes: int
    tokens_in: int
    tokens_out: int
    train_samples: int
    val_samples: int
    initial_loss: float
    epochs: list[EpochStats]
    train_accuracy: float
    val_accuracy: float | None
    confusion: list[list[int]]


class TrainTiming(msgspec.Struct, frozen=True):
    epoch_seconds: list[float]
    total_seconds: float


class Classifier(Module):
    def __init__(self, config: HCCConfig, classes: int, mode: AblationMode) -> None:
        self.hcc = hcc3d.pipeline.build(config)
        self.head = Linear(
            hcc3d.rng.Rng(config.seed).spawn(0xC1A5), config.d, classes, dtype=config.dtype
        )
        self.mode = mode

    def logits(self, features: Tensor) -> Tensor:
        tokens = hcc3d.pipeline.ablation_forward(self.hcc, features, self.mode)
        return self.head(tokens.mean(axis=0, keepdims=True)).reshape(self.head.out_features)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    onehot[label] = 1.0
    return -(hcc3d.tensor.log_softmax(logits, axis=-1) * onehot).sum()


def _features(sample: ToySample) -> Tensor:
    if sample.features is None:
        raise hcc3d.errors.ContractError("Sample has no encoded features.")

    return sample.features


def evaluate(clf: Classifier, samples: Sequence[ToySample]) -> Evaluation:
    classes = clf.head.out_features
    confusion = np.zeros((classes, classes), dtype=np.int64)
    total_loss = 0.0
    for sample in samples:
        logits = clf.logits(_features(sample))
        total_loss += cross_entropy(logits, sample.label).item()
        confusion[sample.label, int(np.argmax(logits.data))] += 1

    n = max(len(samples), 1)
    return Evaluation(
        loss=total_loss / n,
        accuracy=float(np.trace(confusion)) / n,
        confusion=confusion.tolist(),
    )


def train(
    config: HCCConfig,
    task: TaskConfig,
    samples: Sequence[ToySample],
    *,
    mode: AblationMode = "both",
    logger: hcc3d.logger.Logger | None = None,
    out_dir: pathlib.Path | None = None,
) -> tuple[Classifier, TrainReport, TrainTiming]:
    if not samples:
        raise hcc3d.errors.ArgumentError("Cannot train on an empty dataset.")

    classes = max(sample.label for sample in samples) + 1
    if classes < 2:
        raise hcc3d.errors.ConfigError("Training needs at least 2 classes.")

    logger = logger or hcc3d.logger.Stdout()
    encoded = data.encode_dataset(
        samples, m=task.m, d_init=config.d_init, seed=task.seed, dtype=config.dtype
    )
    train_set, val_set = data.split(encoded, task.val_fraction, task.seed)
    clf = Classifier(config, classes, mode)
    opt = hcc3d.optim.create(
        task.optimizer, clf.parameters(), lr=task.lr, betas=task.betas, eps=task.eps
    )
    tokens_out = hcc3d.pipeline.tokens_out(config, mode, task.m)

    history: list[EpochStats] = []
    seconds: list[float] = []
    started = time.perf_counter()
    with logger.run(f"train {mode}", epochs=task.epochs, out_dir=out_dir):
        logger.print(
            f"{len(train_set)} train / {len(val_set)} val samples, "
            f"{task.m} -> {tokens_out} tokens"
        )
        initial = evaluate(clf, train_set)
        logger.print(f"initial loss {initial.loss:.4f} accuracy {initial.accuracy:.3f}")

        for epoch in range(task.epochs):
            epoch_start = time.perf_counter()
            try:
                stats = _run_epoch(clf, opt, train_set, task, epoch)
            except hcc3d.errors.NonFiniteError as exc:
                raise hcc3d.errors.TrainingError(
                    f"Training diverged at epoch {epoch}: {exc.args[0]}"
                ) from exc

            if val_set:
                val = evaluate(clf, val_set)
                stats = msgspec.structs.replace(
                    stats, val_accuracy=val.accuracy, val_loss=val.loss
                )

            history.append(stats)
            seconds.append(time.perf_counter() - epoch_start)
            logger.epoch(stats)

        final_train = evaluate(clf, train_set)
        final_val = evaluate(clf, val_set) if val_set else None

    report = TrainReport(
        mode=mode,
        config=config,
        config_hash=hcc3d.hash.config(config),
        task=task,
        classes=classes,
        tokens_in=task.m,
        tokens_out=tokens_out,
        train_samples=len(train_set),
        val_samples=len(val_set),
        initial_loss=initial.loss,
        epochs=history,
        train_accuracy=final_train.accuracy,
        val_accuracy=final_val.accuracy if final_val else None,
        confusion=(final_val or final_train).confusion,
    )
    timing = TrainTiming(epoch_seconds=seconds, total_seconds=time.perf_counter() - started)
    return clf, report, timing


def _run_epoch(
    clf: Classifier,
    opt: hcc3d.optim.Optimizer,
    train_set: Sequence[ToySample],
    task: TaskConfig,
    epoch: int,
) -> EpochStats:
    order = hcc3d.rng.Rng(task.seed).spawn(epoch).permutation(len(train_set))
    total_loss = 0.0
    correct = 0
    for start in range(0, len(order), task.batch_size):
        batch = order[start : start + task.batch_size]
        opt.zero_grad()
        for i in batch:
            sample = train_set[i]
            logits = clf.logits(_features(sample))
            loss = cross_entropy(logits, sample.label)
            value = loss.item()
            if not math.isfinite(value):
                raise hcc3d.errors.TrainingError(f"Loss became {value} at epoch {epoch}.")

            total_loss += value
            correct += int(np.argmax(logits.data)) == sample.label
            hcc3d.tensor.backward(loss * (1.0 / len(batch)))

        opt.step()

    n = max(len(train_set), 1)
    return EpochStats(epoch=epoch, loss=total_loss / n, train_accuracy=correct / n)


def report_csv(report: TrainReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "loss", "train_accuracy", "val_accuracy", "val_loss"])
    for stats in report.epochs:
        writer.writerow(
            [
                stats.epoch,
                repr(stats.loss),
                repr(stats.train_accuracy),
                "" if stats.val_accuracy is None else repr(stats.val_accuracy),
                "" if stats.val_loss is None else repr(stats.val_loss),
            ]
        )

    return buf.getvalue()


def write(
    clf: Classifier, report: TrainReport, timing: TrainTiming, out_dir: pathlib.Path
) -> dict[str, pathlib.Path]:
    """Write the checkpoint and reports. Returns the written artifacts by role."""
    hcc3d.pipeline.save(clf.hcc, out_dir / CHECKPOINT_DIR)
    hcc3d.file.write(out_dir / REPORT_FILE, msgspec.json.format(msgspec.json.encode(report)))
    hcc3d.file.write(out_dir / REPORT_CSV, report_csv(report))
    hcc3d.file.write(out_dir / TIMING_FILE, msgspec.json.format(msgspec.json.encode(timing)))
    return {
        "checkpoint": out_dir / CHECKPOINT_DIR,
        "report": out_dir / REPORT_FILE,
        "csv": out_dir / REPORT_CSV,
        "timing": out_dir / TIMING_FILE,
    }
