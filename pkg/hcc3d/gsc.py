"""Global structure compression.

n_g learnable queries, enriched with trainable positional encodings, attend
over all m projected tokens. The per-head attention stack is returned so the
detail miner can measure which tokens the global queries covered.
"""

from __future__ import annotations

import numpy as np

import hcc3d.errors
import hcc3d.rng
from hcc3d.layers import (
    AttentionOutput,
    Module,
    MultiHeadCrossAttention,
    PositionalEncoding,
    mha_forward,
    xavier_uniform,
)
from hcc3d.tensor import DType, Tensor


class GscState(Module):
    def __init__(
        self, rng: hcc3d.rng.Rng, *, n_g: int, d: int, heads: int, dtype: DType = "float32"
    ) -> None:
        self.n_g = n_g
        self.query = Tensor(
            xavier_uniform(rng.spawn(0), n_g, d, dtype=dtype), requires_grad=True
        )
        self.pos = PositionalEncoding(n_g, d, dtype=dtype)
        self.attn = MultiHeadCrossAttention(rng.spawn(1), d, heads, dtype=dtype)

    def __call__(self, x: Tensor) -> AttentionOutput:
        return gsc_forward(self, x)


def check_tokens(x: Tensor, d: int) -> None:
    if x.ndim != 2 or x.shape[1] != d:
        raise hcc3d.errors.DimensionError(f"Expected tokens of shape (m, {d}), got {x.shape}.")
    if not np.isfinite(x.data).all():
        raise hcc3d.errors.InputError("Input tokens contain non-finite values.")


def gsc_forward(state: GscState, x: Tensor) -> AttentionOutput:
    """Compress (m, d) tokens into (n_g, d) global features.

    The returned weights are the post-softmax attention stack of shape
    (H, n_g, m), still on the tape.
    """
    check_tokens(x, state.attn.d)
    if x.shape[0] <= state.n_g:
        raise hcc3d.errors.InputError(
            f"Global compression needs more than n_g={state.n_g} tokens, got m={x.shape[0]}."
        )

    return mha_forward(state.attn, state.query + state.pos.table, x)
