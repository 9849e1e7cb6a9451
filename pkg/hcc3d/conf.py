"""HCC module configuration, presets and loading."""

from __future__ import annotations

from typing import TYPE_CHECKING, Any, Literal, TypeAlias

import msgspec
import msgspec.json
import msgspec.structs

import hcc3d.errors
import hcc3d.file
import hcc3d.unset

if TYPE_CHECKING:
    from hcc3d.file import PathLike

Projector: TypeAlias = Literal["linear", "mlp"]
Selection: TypeAlias = Literal["adm", "select_all", "random", "attention_only", "mlp_only"]
DType: TypeAlias = Literal["float32", "float64"]
GeluVariant: TypeAlias = Literal["tanh", "erf"]

SELECTIONS: tuple[Selection, ...] = ("select_all", "random", "attention_only", "mlp_only", "adm")


class HCCConfig(msgspec.Struct, frozen=True, forbid_unknown_fields=True, kw_only=True):
    """Every dimension and hyperparameter of the compression module.

    The token count m is not part of the config; it is read from each input.
    """

    d_init: int = 384
    d: int = 2560
    H: int = 8
    n_g: int = 8
    n_d: int = 4
    K: int = 96
    lam: float = msgspec.field(default=10.0, name="lambda")
    temperature: float = 0.1
    score_scaling: bool = True
    # Weight selected rows by K * softmax(S_sel / temperature) instead of raw S_sel.
    temperature_scaling: bool = True
    detach_coverage: bool = True
    projector: Projector = "linear"
    selection: Selection = "adm"
    dtype: DType = "float32"
    gelu_variant: GeluVariant = "tanh"
    seed: int = 0

    def __post_init__(self) -> None:
        for field in ("d_init", "d", "H", "n_g", "n_d", "K"):
            if getattr(self, field) < 1:
                raise hcc3d.errors.ConfigError(f"{field} must be at least 1.")

        if self.d % self.H:
            raise hcc3d.errors.ConfigError(f"d not divisible by H (d={self.d}, H={self.H}).")
        if self.d % 2:
            raise hcc3d.errors.ConfigError(f"d must be even for positional encodings (d={self.d}).")
        if self.K < self.n_d and self.selection != "select_all":
            raise hcc3d.errors.ConfigError(f"K must be at least n_d (K={self.K}, n_d={self.n_d}).")
        if not self.lam > 0:
            raise hcc3d.errors.ConfigError(f"lambda must be positive, got {self.lam}.")
        if not self.temperature > 0:
            raise hcc3d.errors.ConfigError(f"temperature must be positive, got {self.temperature}.")
        if not 0 <= self.seed < 2**64:
            raise hcc3d.errors.ConfigError("seed must be an unsigned 64-bit integer.")

        for field, choices in (
            ("projector", ("linear", "mlp")),
            ("selection", SELECTIONS),
            ("dtype", ("float32", "float64")),
            ("gelu_variant", ("tanh", "erf")),
        ):
            if getattr(self, field) not in choices:
                raise hcc3d.errors.ConfigError(
                    f'{field} "{getattr(self, field)}" is not one of {", ".join(choices)}.'
                )

    @property
    def tokens_out(self) -> int:
        return self.n_g + self.n_d


def full() -> HCCConfig:
    return HCCConfig()


def desk() -> HCCConfig:
    """Minutes-scale CPU settings for the toy task."""
    return HCCConfig(d_init=16, d=64, H=4, n_g=8, n_d=4, K=16)


def gradcheck() -> HCCConfig:
    return HCCConfig(d_init=8, d=32, H=4, n_g=4, n_d=2, K=8, dtype="float64")


PRESETS = {"full": full, "desk": desk, "gradcheck": gradcheck}


def override(config: HCCConfig, **changes: Any) -> HCCConfig:
    """Copy a config, applying every change that is not `UNSET`.

    The copy is re-validated.
    """
    changes = hcc3d.unset.supplied(**changes)
    if not changes:
        return config

    unknown = set(changes) - set(config.__struct_fields__)
    if unknown:
        raise hcc3d.errors.ConfigError(f"Unknown config fields: {', '.join(sorted(unknown))}.")

    return HCCConfig(**(msgspec.structs.asdict(config) | changes))


def decode(content: bytes | str, *, base: HCCConfig | None = None) -> HCCConfig:
    """Decode JSON config. Fields missing from the JSON come from `base`."""
    try:
        raw = msgspec.json.decode(content, type=dict[str, Any])
    except msgspec.DecodeError as exc:
        raise hcc3d.errors.ConfigParse(f"Invalid config JSON: {exc}") from exc

    if base is not None:
        raw = msgspec.json.decode(msgspec.json.encode(base), type=dict[str, Any]) | raw

    try:
        return msgspec.convert(raw, type=HCCConfig)
    except msgspec.ValidationError as exc:
        raise hcc3d.errors.ConfigParse(f"Invalid config: {exc}") from exc


def load(path: PathLike, *, base: HCCConfig | None = None) -> HCCConfig:
    return decode(hcc3d.file.read(path), base=base)


def resolve(
    *,
    preset: str = "full",
    path: PathLike | None = None,
    **flags: Any,
) -> HCCConfig:
    """Flags override the JSON file, which overrides the preset."""
    if preset not in PRESETS:
        raise hcc3d.errors.ConfigError(
            f'Unknown preset "{preset}". Choose from {", ".join(PRESETS)}.'
        )

    config = PRESETS[preset]()
    if path is not None:
        config = load(path, base=config)

    return override(config, **flags)


def encode(config: HCCConfig) -> bytes:
    return msgspec.json.encode(config)
