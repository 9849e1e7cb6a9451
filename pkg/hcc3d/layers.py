"""Neural building blocks shared by the global and detail compressors."""

from __future__ import annotations

import math
from typing import Iterator, NamedTuple

import numpy as np

import hcc3d.errors
import hcc3d.rng
import hcc3d.tensor
from hcc3d.tensor import DType, GeluVariant, Tensor


class Module:
    """Base class for anything owning parameters.

    Parameters are leaf tensors requiring grad stored as attributes. Child
    modules are walked in attribute insertion order, which gives every
    parameter a stable dotted name such as `gsc.attn.wq.weight`.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for attr, val in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(prefix=f"{name}.")

    def parameters(self) -> list[Tensor]:
        return [param for _, param in self.named_parameters()]

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def num_parameters(self) -> int:
        return sum(param.size for param in self.parameters())


def _param(arr: np.ndarray, dtype: DType) -> Tensor:
    return Tensor(arr, dtype=dtype, requires_grad=True)


def xavier_uniform(
    rng: hcc3d.rng.Rng, out_features: int, in_features: int, *, dtype: DType = "float32"
) -> Tensor:
    """Draws from U[-a, a] with a = sqrt(6 / (in + out))."""
    if out_features < 1 or in_features < 1:
        raise hcc3d.errors.ArgumentError(
            f"xavier_uniform needs positive extents, got {out_features}x{in_features}."
        )

    bound = math.sqrt(6.0 / (in_features + out_features))
    return hcc3d.tensor.rand(
        rng, (out_features, in_features), low=-bound, high=bound, dtype=dtype
    )


def sinusoidal_init(n: int, d: int, *, dtype: DType = "float32") -> Tensor:
    """The transformer sinusoid table.

    Channel 2k holds sin(pos / 10000^(2k/d)) and channel 2k+1 the matching cos.
    """
    if d % 2:
        raise hcc3d.errors.ConfigError(f"Positional encoding width must be even, got d={d}.")

    pos = np.arange(n, dtype=np.float64)[:, None]
    freqs = np.power(10000.0, -np.arange(0, d, 2, dtype=np.float64) / d)
    table = np.empty((n, d), dtype=np.float64)
    table[:, 0::2] = np.sin(pos * freqs)
    table[:, 1::2] = np.cos(pos * freqs)
    return Tensor(table, dtype=dtype)


class Linear(Module):
    def __init__(
        self,
        rng: hcc3d.rng.Rng,
        in_features: int,
        out_features: int,
        *,
        bias: bool = True,
        dtype: DType = "float32",
    ) -> None:
        self.in_features = in_features
        self.out_features = out_features
        self.weight = _param(
            xavier_uniform(rng, out_features, in_features, dtype=dtype).data, dtype
        )
        self.bias = _param(np.zeros(out_features), dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return linear_forward(self, x)


def linear_forward(layer: Linear, x: Tensor) -> Tensor:
    if x.ndim != 2 or x.shape[-1] != layer.in_features:
        raise hcc3d.errors.DimensionError(
            f"Linear expects (n, {layer.in_features}) inputs, got {x.shape}."
        )

    out = hcc3d.tensor.matmul(x, layer.weight.T)
    return out + layer.bias if layer.bias is not None else out


class LayerNorm(Module):
    """Per-row normalization with a learned gain and (optionally) offset."""

    def __init__(
        self, d: int, *, eps: float = 1e-5, offset: bool = True, dtype: DType = "float32"
    ) -> None:
        self.d = d
        self.eps = eps
        self.gain = _param(np.ones(d), dtype)
        self.offset = _param(np.zeros(d), dtype) if offset else None

    def normalize(self, x: Tensor) -> Tensor:
        """The pre-affine output: zero mean, unit variance per row."""
        if x.shape[-1] != self.d:
            raise hcc3d.errors.DimensionError(
                f"LayerNorm expects width {self.d}, got shape {x.shape}."
            )

        centered = x - x.mean(axis=-1, keepdims=True)
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered * (var + self.eps) ** -0.5

    def __call__(self, x: Tensor) -> Tensor:
        out = self.normalize(x) * self.gain
        return out + self.offset if self.offset is not None else out


class PositionalEncoding(Module):
    def __init__(self, n: int, d: int, *, dtype: DType = "float32") -> None:
        self.table = _param(sinusoidal_init(n, d, dtype=dtype).data, dtype)


class Scorer(Module):
    """Linear(d -> d/4) -> GeLU -> Linear(d/4 -> 1), one scalar per token."""

    def __init__(
        self,
        rng: hcc3d.rng.Rng,
        d: int,
        *,
        gelu_variant: GeluVariant = "tanh",
        dtype: DType = "float32",
    ) -> None:
        hidden = max(1, d // 4)
        self.fc1 = Linear(rng.spawn(0), d, hidden, dtype=dtype)
        self.fc2 = Linear(rng.spawn(1), hidden, 1, dtype=dtype)
        self.gelu_variant = gelu_variant

    def __call__(self, x: Tensor) -> Tensor:
        hidden = hcc3d.tensor.gelu(self.fc1(x), self.gelu_variant)
        return self.fc2(hidden).reshape(x.shape[0])


class AttentionOutput(NamedTuple):
    features: Tensor
    weights: Tensor


class MultiHeadCrossAttention(Module):
    """Queries attend over a context with H heads of width d/H.

    Keys carry neither a projection bias nor a normalization offset: both
    would add the same amount to every score in a softmax row.
    """

    def __init__(
        self, rng: hcc3d.rng.Rng, d: int, heads: int, *, dtype: DType = "float32"
    ) -> None:
        if heads < 1 or d % heads:
            raise hcc3d.errors.ConfigError(f"d not divisible by H (d={d}, H={heads}).")

        self.d = d
        self.heads = heads
        self.ln_q = LayerNorm(d, dtype=dtype)
        self.ln_k = LayerNorm(d, offset=False, dtype=dtype)
        self.ln_v = LayerNorm(d, dtype=dtype)
        self.wq = Linear(rng.spawn(0), d, d, dtype=dtype)
        self.wk = Linear(rng.spawn(1), d, d, bias=False, dtype=dtype)
        self.wv = Linear(rng.spawn(2), d, d, dtype=dtype)
        self.wo = Linear(rng.spawn(3), d, d, dtype=dtype)

    @property
    def head_dim(self) -> int:
        return self.d // self.heads

    def __call__(self, queries: Tensor, context: Tensor) -> AttentionOutput:
        return mha_forward(self, queries, context)


def mha_forward(
    attn: MultiHeadCrossAttention, queries: Tensor, context: Tensor
) -> AttentionOutput:
    """Cross-attention returning features (n_q, d) and weights (H, n_q, n_c).

    Head outputs are concatenated along the feature axis, so head i fills
    columns [i*d_k, (i+1)*d_k) before the output projection.
    """
    for label, val in (("queries", queries), ("context", context)):
        if val.ndim != 2 or val.shape[1] != attn.d:
            raise hcc3d.errors.DimensionError(
                f"Attention {label} must have shape (n, {attn.d}), got {val.shape}."
            )
    if context.shape[0] < 1:
        raise hcc3d.errors.DimensionError("Attention context is empty.")

    n_q, n_c, heads, dk = queries.shape[0], context.shape[0], attn.heads, attn.head_dim
    q = attn.wq(attn.ln_q(queries)).reshape(n_q, heads, dk).transpose(1, 0, 2)
    k = attn.wk(attn.ln_k(context)).reshape(n_c, heads, dk).transpose(1, 2, 0)
    v = attn.wv(attn.ln_v(context)).reshape(n_c, heads, dk).transpose(1, 0, 2)

    weights = hcc3d.tensor.softmax(hcc3d.tensor.matmul(q, k) * (1.0 / math.sqrt(dk)), axis=-1)
    heads_out = hcc3d.tensor.matmul(weights, v)
    features = attn.wo(heads_out.transpose(1, 0, 2).reshape(n_q, attn.d))
    return AttentionOutput(features=features, weights=weights)
