"""Adaptive detail mining.

Tokens the global queries barely attended to, but which a learned scorer
rates as important, are picked with a hard Top-K and recompressed by a second
set of detail queries. Global and detail features are then fused.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import msgspec
import numpy as np

import hcc3d.errors
import hcc3d.hash
import hcc3d.rng
import hcc3d.tensor
from hcc3d.layers import (
    LayerNorm,
    Linear,
    Module,
    MultiHeadCrossAttention,
    PositionalEncoding,
    Scorer,
    mha_forward,
    xavier_uniform,
)
from hcc3d.tensor import DType, Tensor

if TYPE_CHECKING:
    from hcc3d.conf import HCCConfig


class AdmState(Module):
    def __init__(self, rng: hcc3d.rng.Rng, config: HCCConfig) -> None:
        d, dtype = config.d, config.dtype
        self.mlp1 = Scorer(rng.spawn(0), d, gelu_variant=config.gelu_variant, dtype=dtype)
        self.mlp2 = Scorer(rng.spawn(1), d, gelu_variant=config.gelu_variant, dtype=dtype)
        self.query = Tensor(
            xavier_uniform(rng.spawn(2), config.n_d, d, dtype=dtype), requires_grad=True
        )
        self.pos = PositionalEncoding(config.n_d, d, dtype=dtype)
        self.attn = MultiHeadCrossAttention(rng.spawn(3), d, config.H, dtype=dtype)
        self.fuse = Linear(rng.spawn(4), d, d, dtype=dtype)
        self.norm = LayerNorm(d, dtype=dtype)
        self.config = config

    @property
    def lam(self) -> float:
        return self.config.lam


class CompressionTrace(msgspec.Struct, frozen=True):
    """Every intermediate of one forward pass.

    `ranking` holds the scores Top-K actually ranked, which differ from
    `S_sel` for the non-default selection strategies.
    """

    A_cov: Tensor
    I: Tensor  # noqa: E741
    S_c: Tensor
    S_sel: Tensor
    ranking: Tensor
    selected: list[int]
    F_g: Tensor
    F_d: Tensor
    Z: Tensor


def coverage(attn_weights: Tensor) -> Tensor:
    """Total attention mass each context token received over all heads and queries."""
    if attn_weights.ndim != 3:
        raise hcc3d.errors.DimensionError(
            f"Coverage expects an (H, n_g, m) stack, got {attn_weights.shape}."
        )
    if (attn_weights.data < 0).any():
        raise hcc3d.errors.InputError("Attention weights contain negative entries.")
    if not np.allclose(attn_weights.data.sum(axis=-1), 1.0, rtol=0, atol=1e-4):
        raise hcc3d.errors.InputError("Attention rows do not sum to 1.")

    return attn_weights.sum(axis=(0, 1))


def importance(state: AdmState, x: Tensor) -> Tensor:
    return hcc3d.tensor.sigmoid(state.mlp1(x))


def complementary_score(imp: Tensor, cov: Tensor, lam: float) -> Tensor:
    """importance * (1 - sigmoid(lam * coverage)).

    Computed as importance * sigmoid(-lam * coverage), which is equal but stays
    strictly positive where 1 - sigmoid would round to zero.
    """
    if imp.shape != cov.shape or imp.ndim != 1:
        raise hcc3d.errors.DimensionError(
            f"Score vectors differ: {imp.shape} and {cov.shape}."
        )
    if not lam > 0:
        raise hcc3d.errors.ArgumentError(f"lambda must be positive, got {lam}.")
    if (cov.data < 0).any():
        raise hcc3d.errors.InputError("Coverage contains negative entries.")

    return imp * hcc3d.tensor.sigmoid(cov * -lam)


def selection_score(state: AdmState, s_c: Tensor, x: Tensor) -> Tensor:
    if s_c.shape != (x.shape[0],):
        raise hcc3d.errors.DimensionError(
            f"Scores of shape {s_c.shape} do not match {x.shape[0]} tokens."
        )

    return s_c * hcc3d.tensor.sigmoid(state.mlp2(x))


def selection_weights(state: AdmState, scores: Tensor, selected: list[int]) -> Tensor:
    """Per-row multipliers for the selected tokens, shaped (K, 1)."""
    top = hcc3d.tensor.take_rows(scores.reshape(scores.shape[0], 1), selected)
    if not state.config.temperature_scaling:
        return top

    weights = hcc3d.tensor.softmax(top * (1.0 / state.config.temperature), axis=0)
    return weights * float(len(selected))


def gather(state: AdmState, scores: Tensor, x: Tensor, k: int) -> tuple[Tensor, list[int]]:
    """X[TopK(scores)], scaled by score when score scaling is on."""
    m = x.shape[0]
    if k > m:
        raise hcc3d.errors.ConfigError(f"K={k} exceeds the m={m} input tokens.")

    selected, _ = hcc3d.tensor.topk(scores, k)
    rows = hcc3d.tensor.take_rows(x, selected)
    if state.config.score_scaling:
        rows = rows * selection_weights(state, scores, selected)

    return rows, selected


def select_and_compress(
    state: AdmState, s_sel: Tensor, x: Tensor, k: int
) -> tuple[Tensor, list[int]]:
    """Select the top-k tokens and recompress them into n_d detail features."""
    if k < state.query.shape[0]:
        raise hcc3d.errors.ConfigError(
            f"K={k} is smaller than the n_d={state.query.shape[0]} detail queries."
        )

    rows, selected = gather(state, s_sel, x, k)
    out = mha_forward(state.attn, state.query + state.pos.table, rows)
    return out.features, selected


def fuse_tokens(state: AdmState, tokens: Tensor) -> Tensor:
    """LayerNorm(GeLU(tokens W^T + b)) applied per token."""
    if tokens.ndim != 2 or tokens.shape[1] != state.fuse.in_features:
        raise hcc3d.errors.DimensionError(
            f"Fusion expects width {state.fuse.in_features}, got {tokens.shape}."
        )

    return state.norm(hcc3d.tensor.gelu(state.fuse(tokens), state.config.gelu_variant))


def fuse(state: AdmState, f_g: Tensor, f_d: Tensor) -> Tensor:
    """Concatenate global then detail features on the token axis and fuse."""
    if f_g.ndim != 2 or f_d.ndim != 2 or f_g.shape[1] != f_d.shape[1]:
        raise hcc3d.errors.DimensionError(
            f"Cannot fuse features of shapes {f_g.shape} and {f_d.shape}."
        )

    return fuse_tokens(state, hcc3d.tensor.concat([f_g, f_d], axis=0))


###
# Selection strategies
###


def random_ranking(x: Tensor, seed: int, dtype: DType) -> Tensor:
    """Uniform random scores seeded by (seed, input digest)."""
    rng = hcc3d.rng.Rng(hcc3d.hash.seed("random-selection", seed, x.data.tobytes()))
    return Tensor(rng.uniform((x.shape[0],)), dtype=dtype)


def ranking(
    state: AdmState, x: Tensor, *, cov: Tensor, imp: Tensor, s_sel: Tensor
) -> Tensor:
    """The scores Top-K ranks under the configured selection strategy."""
    match state.config.selection:
        case "adm" | "select_all":
            return s_sel
        case "attention_only":
            return hcc3d.tensor.sigmoid(cov.detach() * -state.lam)
        case "mlp_only":
            return imp
        case "random":
            return random_ranking(x, state.config.seed, state.config.dtype)
        case other:
            raise hcc3d.errors.UnknownStrategy(f'Unknown selection strategy "{other}".')


def detail_features(
    state: AdmState, x: Tensor, scores: Tensor, k: int
) -> tuple[Tensor, list[int]]:
    """Run the configured strategy's detail branch on ranked scores."""
    match state.config.selection:
        case "select_all":
            # The selected rows themselves become the detail tokens.
            return gather(state, scores, x, k)
        case "random":
            if k > x.shape[0]:
                raise hcc3d.errors.ConfigError(f"K={k} exceeds the m={x.shape[0]} input tokens.")

            selected, _ = hcc3d.tensor.topk(scores, k)
            rows = hcc3d.tensor.take_rows(x, selected)
            return mha_forward(state.attn, state.query + state.pos.table, rows).features, selected
        case _:
            return select_and_compress(state, scores, x, k)


def mine(
    state: AdmState, x: Tensor, attn_weights: Tensor
) -> tuple[Tensor, list[int], dict[str, Tensor]]:
    """Score, select and recompress. Returns F_d, the selection and the scores."""
    cov = coverage(attn_weights.detach() if state.config.detach_coverage else attn_weights)
    return mine_with_coverage(state, x, cov)


def mine_with_coverage(
    state: AdmState, x: Tensor, cov: Tensor
) -> tuple[Tensor, list[int], dict[str, Tensor]]:
    imp = importance(state, x)
    s_c = complementary_score(imp, cov, state.lam)
    s_sel = selection_score(state, s_c, x)
    ranked = ranking(state, x, cov=cov, imp=imp, s_sel=s_sel)
    f_d, selected = detail_features(state, x, ranked, state.config.K)
    scores = {"A_cov": cov, "I": imp, "S_c": s_c, "S_sel": s_sel, "ranking": ranked}
    return f_d, selected, scores
