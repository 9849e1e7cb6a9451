"""Analytic multiply-accumulate counts for the compressed and uncompressed pipelines.

Latency is modeled as proportional to these counts. For a decoder of L layers,
width h and FFN multiplier r, prefilling t tokens costs

    L * (4 t h^2 + 2 t^2 h + 2 r t h^2)

(q/k/v/o projections, score and value products, FFN up and down). Each of s
decoded tokens then costs L * (4 h^2 + 2 r h^2 + 2 (t + s') h) where s' is
the number of tokens already decoded.
"""

from __future__ import annotations

import csv
import io
from typing import TYPE_CHECKING, Sequence

import msgspec
import msgspec.json

import hcc3d.errors
import hcc3d.file

if TYPE_CHECKING:
    from hcc3d.conf import HCCConfig
    from hcc3d.file import PathLike

REPORT_FILE = "cost.json"
REPORT_CSV = "cost.csv"


class CostModelSpec(msgspec.Struct, frozen=True, forbid_unknown_fields=True, kw_only=True):
    layers: int = 32
    hidden: int = 2560
    ffn_mult: int = 4
    heads: int = 32
    prompt_text_tokens: int = 64
    encoder_layers: int = 12
    encoder_hidden: int = 384
    encoder_ffn_mult: int = 4
    # 0 models prefill only.
    decode_tokens: int = 0

    def __post_init__(self) -> None:
        for field in self.__struct_fields__:
            val = getattr(self, field)
            if field == "decode_tokens" and val >= 0:
                continue
            if field == "prompt_text_tokens" and val >= 0:
                continue
            if val < 1:
                raise hcc3d.errors.ConfigError(f"Cost spec field {field} must be positive.")


def phi2_like() -> CostModelSpec:
    return CostModelSpec(layers=32, hidden=2560, ffn_mult=4, heads=32, prompt_text_tokens=64)


def load_spec(path: PathLike) -> CostModelSpec:
    try:
        return msgspec.json.decode(hcc3d.file.read(path), type=CostModelSpec)
    except (msgspec.DecodeError, msgspec.ValidationError) as exc:
        raise hcc3d.errors.ConfigParse(f'Invalid cost spec "{path}": {exc}') from exc


def _transformer_flops(layers: int, hidden: int, ffn_mult: int, tokens: int) -> int:
    t, h = tokens, hidden
    return layers * (4 * t * h * h + 2 * t * t * h + 2 * ffn_mult * t * h * h)


def prefill_flops(spec: CostModelSpec, tokens: int) -> int:
    if tokens < 1:
        raise hcc3d.errors.ArgumentError(f"Prefill needs at least one token, got {tokens}.")

    return _transformer_flops(spec.layers, spec.hidden, spec.ffn_mult, tokens)


def decode_flops(spec: CostModelSpec, prompt_tokens: int, steps: int) -> int:
    """Cost of decoding `steps` tokens after a prompt, with a KV cache."""
    h, layers = spec.hidden, spec.layers
    per_step = 4 * h * h + 2 * spec.ffn_mult * h * h
    # Attention over the cache grows by one token per step.
    cache = sum(2 * (prompt_tokens + s) * h for s in range(steps))
    return layers * (steps * per_step + cache)


def encoder_flops(spec: CostModelSpec, tokens: int) -> int:
    """The point-cloud encoder, modeled as a transformer over its output tokens."""
    return _transformer_flops(
        spec.encoder_layers, spec.encoder_hidden, spec.encoder_ffn_mult, tokens
    )


def _attention_flops(d: int, n_q: int, n_c: int) -> int:
    # Query projection, key and value projections, scores, weighted values, output projection.
    return n_q * d * d + 2 * n_c * d * d + 2 * n_q * n_c * d + n_q * d * d


def hcc_module_flops(config: HCCConfig, m: int) -> int:
    """Exact multiply-accumulate count of one forward over m tokens."""
    if m < 1:
        raise hcc3d.errors.ArgumentError(f"m must be at least 1, got {m}.")

    d = config.d
    hidden = max(1, d // 4)
    projection = m * config.d_init * d + (m * d * d if config.projector == "mlp" else 0)
    gsc = _attention_flops(d, config.n_g, m)
    scorers = 2 * (m * d * hidden + m * hidden)
    detail = _attention_flops(d, config.n_d, config.K)
    fusion = (config.n_g + config.n_d) * d * d
    return projection + gsc + scorers + detail + fusion


class CostRow(msgspec.Struct, frozen=True):
    visual_tokens: int
    llm_tokens: int
    encoder_flops: int
    module_flops: int
    llm_flops: int
    total_flops: int
    encoder_share: float
    module_share: float
    llm_share: float
    token_ratio: float
    token_reduction: float
    llm_flops_ratio: float


class CostReport(msgspec.Struct, frozen=True):
    """Modeled multiply-accumulate counts. Not measured latencies."""

    spec: CostModelSpec
    tokens_in: int
    text_tokens: int
    rows: list[CostRow]


def _row(
    spec: CostModelSpec, config: HCCConfig, m_in: int, tokens_out: int, text_tokens: int
) -> CostRow:
    if not 1 <= tokens_out <= m_in:
        raise hcc3d.errors.ConfigError(
            f"Output token count {tokens_out} must be within [1, {m_in}]."
        )

    llm_tokens = tokens_out + text_tokens
    enc = encoder_flops(spec, m_in)
    # Passing every token through is modeled as skipping the module.
    module = 0 if tokens_out == m_in else hcc_module_flops(config, m_in)
    llm = prefill_flops(spec, llm_tokens) + decode_flops(spec, llm_tokens, spec.decode_tokens)
    baseline_llm = prefill_flops(spec, m_in + text_tokens) + decode_flops(
        spec, m_in + text_tokens, spec.decode_tokens
    )
    total = enc + module + llm
    return CostRow(
        visual_tokens=tokens_out,
        llm_tokens=llm_tokens,
        encoder_flops=enc,
        module_flops=module,
        llm_flops=llm,
        total_flops=total,
        encoder_share=enc / total,
        module_share=module / total,
        llm_share=llm / total,
        token_ratio=tokens_out / m_in,
        token_reduction=1.0 - tokens_out / m_in,
        llm_flops_ratio=llm / baseline_llm,
    )


def compare(
    spec: CostModelSpec,
    config: HCCConfig,
    m_in: int,
    text_tokens: int | None = None,
    tokens_out: Sequence[int] | None = None,
) -> CostReport:
    """Rows for the uncompressed input and each requested output token count.

    Without `tokens_out`, the settings are m_in and n_g + n_d.
    """
    text = spec.prompt_text_tokens if text_tokens is None else text_tokens
    if text < 0:
        raise hcc3d.errors.ConfigError("text_tokens must not be negative.")

    settings = list(tokens_out) if tokens_out else [m_in, config.tokens_out]
    return CostReport(
        spec=spec,
        tokens_in=m_in,
        text_tokens=text,
        rows=[_row(spec, config, m_in, setting, text) for setting in settings],
    )


_CSV_FIELDS = (
    "visual_tokens",
    "llm_tokens",
    "encoder_flops",
    "module_flops",
    "llm_flops",
    "total_flops",
    "encoder_share",
    "module_share",
    "llm_share",
    "token_ratio",
    "token_reduction",
    "llm_flops_ratio",
)


def report_csv(report: CostReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    for row in report.rows:
        writer.writerow([getattr(row, field) for field in _CSV_FIELDS])

    return buf.getvalue()


def write(report: CostReport, out_dir: PathLike) -> None:
    hcc3d.file.write(
        f"{out_dir}/{REPORT_FILE}", msgspec.json.format(msgspec.json.encode(report))
    )
    hcc3d.file.write(f"{out_dir}/{REPORT_CSV}", report_csv(report))
