"""Compare taped gradients of the full module with central finite differences.

The scalar loss is sum(Z * R) for a fixed random R. The check differentiates
through coverage, so it runs with `detach_coverage` off. Because Top-K
selection is piecewise constant, a finite difference is only meaningful while
the selected set stays put; when any perturbation changes it, the check
restarts on a freshly drawn input.
"""

from __future__ import annotations

from typing import Sequence

import msgspec
import numpy as np

import hcc3d.conf
import hcc3d.errors
import hcc3d.hash
import hcc3d.pipeline
import hcc3d.rng
import hcc3d.tensor
from hcc3d.conf import HCCConfig
from hcc3d.pipeline import HCCModule
from hcc3d.tensor import Tensor

DEFAULT_TOLERANCE = 1e-4
DEFAULT_STEP = 1e-4
ABS_FLOOR = 1e-6
# Entries where both derivatives are this small are dominated by truncation error.
SKIP_BELOW = 1e-6


class ParamCheck(msgspec.Struct, frozen=True):
    name: str
    checked: int
    max_error: float
    passed: bool
    skipped: int = 0


class GradcheckReport(msgspec.Struct, frozen=True):
    config_hash: str
    m: int
    tolerance: float
    step: float
    attempts: int
    params: list[ParamCheck]
    passed: bool


class _SelectionChanged(Exception):
    pass


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), ABS_FLOOR)


def matches(name: str, filters: Sequence[str]) -> bool:
    return not filters or any(name == f or name.startswith(f"{f}.") for f in filters)


def _loss(module: HCCModule, x: Tensor, weights: Tensor) -> tuple[Tensor, list[int]]:
    z, trace = hcc3d.pipeline.hcc_forward(module, x)
    return (z * weights).sum(), trace.selected


def _check_param(
    module: HCCModule,
    x: Tensor,
    weights: Tensor,
    name: str,
    param: Tensor,
    grad: np.ndarray,
    *,
    selected: list[int],
    indices: np.ndarray,
    step: float,
    tolerance: float,
) -> ParamCheck:
    orig = param.numpy()
    errors = []
    skipped = 0
    try:
        for idx in indices:
            values = []
            for sign in (1.0, -1.0):
                perturbed = orig.copy()
                perturbed.flat[idx] += sign * step
                param.assign(perturbed)
                loss, now_selected = _loss(module, x, weights)
                if now_selected != selected:
                    raise _SelectionChanged(name)

                values.append(loss.item())

            numeric = (values[0] - values[1]) / (2 * step)
            analytic = float(grad.flat[idx])
            if max(abs(analytic), abs(numeric)) < SKIP_BELOW:
                skipped += 1
                continue

            errors.append(relative_error(analytic, numeric))
    finally:
        param.assign(orig)

    max_error = max(errors, default=0.0)
    return ParamCheck(
        name=name,
        checked=len(errors),
        max_error=max_error,
        passed=max_error <= tolerance,
        skipped=skipped,
    )


def run(
    config: HCCConfig,
    *,
    m: int = 24,
    tolerance: float = DEFAULT_TOLERANCE,
    step: float = DEFAULT_STEP,
    params: Sequence[str] = (),
    entries: int = 8,
    retries: int = 3,
    seed: int = 0,
) -> GradcheckReport:
    """Check up to `entries` sampled entries of every parameter matching `params`.

    Entries whose analytic and numeric derivatives both fall below `SKIP_BELOW`
    are counted as skipped.

    Raises `InstabilityError` when the selection changes under perturbation on
    the initial input and on each of `retries` reseeded inputs.
    """
    if tolerance < 0 or step <= 0 or entries < 1 or retries < 0:
        raise hcc3d.errors.UsageError(
            "tolerance must be non-negative; step, entries positive; retries non-negative."
        )

    config = hcc3d.conf.override(config, dtype="float64", detach_coverage=False)
    module = hcc3d.pipeline.build(config)
    named = [(name, param) for name, param in module.named_parameters() if matches(name, params)]
    if not named:
        raise hcc3d.errors.UsageError(f"No parameters match {', '.join(params)}.")

    tokens = hcc3d.pipeline.tokens_out(config, "both", m)
    for attempt in range(retries + 1):
        rng = hcc3d.rng.Rng(hcc3d.hash.seed("gradcheck", seed, attempt))
        x = Tensor(rng.normal((m, config.d_init)), dtype="float64")
        weights = Tensor(rng.spawn(1).normal((tokens, config.d)), dtype="float64")

        module.zero_grad()
        loss, selected = _loss(module, x, weights)
        hcc3d.tensor.backward(loss)

        try:
            checks = []
            for i, (name, param) in enumerate(named):
                grad = param.grad if param.grad is not None else np.zeros(param.shape)
                indices = (
                    np.arange(param.size)
                    if param.size <= entries
                    else np.sort(rng.spawn(2, i).choice(param.size, entries))
                )
                checks.append(
                    _check_param(
                        module,
                        x,
                        weights,
                        name,
                        param,
                        grad,
                        selected=selected,
                        indices=indices,
                        step=step,
                        tolerance=tolerance,
                    )
                )
        except _SelectionChanged:
            continue

        return GradcheckReport(
            config_hash=hcc3d.hash.config(config),
            m=m,
            tolerance=tolerance,
            step=step,
            attempts=attempt + 1,
            params=checks,
            passed=all(check.passed for check in checks),
        )

    raise hcc3d.errors.InstabilityError(
        f"Top-K selection changed under perturbation on all {retries + 1} inputs."
    )
