"""The end-to-end compression module and its checkpoints.

A checkpoint is a directory holding `manifest.json` plus one HCCT file per
parameter, named after the parameter's registry name.
"""

from __future__ import annotations

import pathlib
from typing import TYPE_CHECKING, Literal, TypeAlias

import msgspec
import msgspec.json

import hcc3d.adm
import hcc3d.errors
import hcc3d.file
import hcc3d.gsc
import hcc3d.hash
import hcc3d.hcct
import hcc3d.rng
import hcc3d.tensor
from hcc3d.adm import AdmState, CompressionTrace
from hcc3d.conf import HCCConfig
from hcc3d.gsc import GscState
from hcc3d.layers import Linear, Module
from hcc3d.tensor import Tensor

if TYPE_CHECKING:
    from hcc3d.file import PathLike

AblationMode: TypeAlias = Literal["both", "gsc_only", "adm_only", "baseline"]
ABLATION_MODES: tuple[AblationMode, ...] = ("both", "gsc_only", "adm_only", "baseline")
CHECKPOINT_VERSION = 1
MANIFEST_FILE = "manifest.json"


class Projector(Module):
    """Linear -> GeLU -> Linear input projection."""

    def __init__(self, rng: hcc3d.rng.Rng, config: HCCConfig) -> None:
        self.fc1 = Linear(rng.spawn(0), config.d_init, config.d, dtype=config.dtype)
        self.fc2 = Linear(rng.spawn(1), config.d, config.d, dtype=config.dtype)
        self.gelu_variant = config.gelu_variant

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(hcc3d.tensor.gelu(self.fc1(x), self.gelu_variant))


class HCCModule(Module):
    def __init__(self, config: HCCConfig) -> None:
        rng = hcc3d.rng.Rng(config.seed)
        self.config = config
        self.proj = (
            Linear(rng.spawn(0), config.d_init, config.d, dtype=config.dtype)
            if config.projector == "linear"
            else Projector(rng.spawn(0), config)
        )
        self.gsc = GscState(
            rng.spawn(1), n_g=config.n_g, d=config.d, heads=config.H, dtype=config.dtype
        )
        self.adm = AdmState(rng.spawn(2), config)

    def __call__(self, x_init: Tensor) -> tuple[Tensor, CompressionTrace]:
        return hcc_forward(self, x_init)


def build(config: HCCConfig) -> HCCModule:
    """Construct a module deterministically from the config seed."""
    return HCCModule(config)


def parameter_count(config: HCCConfig) -> int:
    """Closed-form count of every learnable scalar for a config."""
    d = config.d
    hidden = max(1, d // 4)
    # Separate q/k/v LayerNorms (keys without offset), four d x d projections,
    # the key projection without bias.
    attention = 4 * d * d + 3 * d + 5 * d
    scorer = d * hidden + hidden + hidden + 1
    proj = config.d_init * d + d
    if config.projector == "mlp":
        proj += d * d + d

    gsc = 2 * config.n_g * d + attention
    adm = 2 * scorer + 2 * config.n_d * d + attention + d * d + d + 2 * d
    return proj + gsc + adm


def project(module: HCCModule, x_init: Tensor) -> Tensor:
    config = module.config
    if x_init.ndim != 2 or x_init.shape[1] != config.d_init:
        raise hcc3d.errors.DimensionError(
            f"Expected input features of shape (m, {config.d_init}), got {x_init.shape}."
        )
    if x_init.dtype != config.dtype:
        x_init = Tensor(x_init, dtype=config.dtype)

    hcc3d.gsc.check_tokens(x_init, config.d_init)
    return module.proj(x_init)


def _check_k(module: HCCModule, m: int) -> None:
    if module.config.K > m:
        raise hcc3d.errors.ConfigError(f"K={module.config.K} exceeds the m={m} input tokens.")


def hcc_forward(module: HCCModule, x_init: Tensor) -> tuple[Tensor, CompressionTrace]:
    """Compress (m, d_init) encoder features into (n_g + n_d, d) tokens."""
    x = project(module, x_init)
    _check_k(module, x.shape[0])
    f_g, attn_weights = hcc3d.gsc.gsc_forward(module.gsc, x)
    f_d, selected, scores = hcc3d.adm.mine(module.adm, x, attn_weights)
    z = hcc3d.adm.fuse(module.adm, f_g, f_d)
    return z, CompressionTrace(selected=selected, F_g=f_g, F_d=f_d, Z=z, **scores)


def ablation_forward(module: HCCModule, x_init: Tensor, mode: AblationMode) -> Tensor:
    """Forward with one or both compressors switched off.

    `adm_only` has no global attention, so coverage is uniform at H * n_g / m.
    `baseline` skips compression and returns the m projected tokens.
    """
    match mode:
        case "both":
            return hcc_forward(module, x_init)[0]
        case "gsc_only":
            f_g, _ = hcc3d.gsc.gsc_forward(module.gsc, project(module, x_init))
            return hcc3d.adm.fuse_tokens(module.adm, f_g)
        case "adm_only":
            x = project(module, x_init)
            _check_k(module, x.shape[0])
            m, config = x.shape[0], module.config
            cov = hcc3d.tensor.full((m,), config.H * config.n_g / m, dtype=config.dtype)
            f_d, _, _ = hcc3d.adm.mine_with_coverage(module.adm, x, cov)
            return hcc3d.adm.fuse_tokens(module.adm, f_d)
        case "baseline":
            return project(module, x_init)
        case other:
            raise hcc3d.errors.UsageError(f'Unknown ablation mode "{other}".')


def tokens_out(config: HCCConfig, mode: AblationMode, m: int) -> int:
    """Output token count of a forward in the given mode."""
    n_d = config.K if config.selection == "select_all" else config.n_d
    return {"both": config.n_g + n_d, "gsc_only": config.n_g, "adm_only": n_d, "baseline": m}[
        mode
    ]


###
# Checkpoints
###


class ParamEntry(msgspec.Struct, frozen=True):
    name: str
    file: str
    shape: list[int]
    dtype: str
    digest: str


class CheckpointManifest(msgspec.Struct, frozen=True):
    version: int
    config: HCCConfig
    num_parameters: int
    parameters: list[ParamEntry]


def save(module: HCCModule, path: PathLike) -> CheckpointManifest:
    root = pathlib.Path(path)
    entries = []
    for name, param in module.named_parameters():
        content = hcc3d.hcct.encode(param)
        hcc3d.file.write(root / f"{name}.hcct", content)
        entries.append(
            ParamEntry(
                name=name,
                file=f"{name}.hcct",
                shape=list(param.shape),
                dtype=param.dtype,
                digest=hcc3d.hash.blob(content),
            )
        )

    manifest = CheckpointManifest(
        version=CHECKPOINT_VERSION,
        config=module.config,
        num_parameters=module.num_parameters(),
        parameters=entries,
    )
    hcc3d.file.write(root / MANIFEST_FILE, msgspec.json.format(msgspec.json.encode(manifest)))
    return manifest


def read_manifest(path: PathLike) -> CheckpointManifest:
    manifest_path = hcc3d.file.require_dir(path) / MANIFEST_FILE
    content = hcc3d.file.read(manifest_path)
    try:
        version = msgspec.json.decode(content, type=dict).get("version")
    except msgspec.DecodeError as exc:
        raise hcc3d.errors.FormatError(f'"{manifest_path}" is not valid JSON.') from exc

    if version != CHECKPOINT_VERSION:
        raise hcc3d.errors.FormatError(
            f'"{manifest_path}" has version {version}, expected {CHECKPOINT_VERSION}.'
        )

    try:
        return msgspec.json.decode(content, type=CheckpointManifest)
    except msgspec.ValidationError as exc:
        raise hcc3d.errors.FormatError(
            f'Invalid checkpoint manifest "{manifest_path}": {exc}'
        ) from exc


def load(path: PathLike) -> HCCModule:
    root = pathlib.Path(path)
    manifest = read_manifest(root)
    module = build(manifest.config)
    params = dict(module.named_parameters())
    listed = {entry.name for entry in manifest.parameters}
    if missing := sorted(set(params) - listed):
        raise hcc3d.errors.FormatError(f"Checkpoint is missing parameters: {', '.join(missing)}.")

    for entry in manifest.parameters:
        if entry.name not in params:
            raise hcc3d.errors.FormatError(f'Checkpoint has unknown parameter "{entry.name}".')

        param = params[entry.name]
        if tuple(entry.shape) != param.shape:
            raise hcc3d.errors.ShapeError(
                f'Parameter "{entry.name}" has shape {tuple(entry.shape)} in the manifest, '
                f"expected {param.shape}."
            )

        value = hcc3d.hcct.read(root / entry.file)
        if value.shape != param.shape or value.dtype != param.dtype:
            raise hcc3d.errors.ShapeError(
                f'Parameter "{entry.name}" file holds {value.dtype}{value.shape}, '
                f"expected {param.dtype}{param.shape}."
            )

        param.assign(value)

    return module
