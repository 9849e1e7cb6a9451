import math

import numpy as np
import pytest

import hcc3d.errors
import hcc3d.layers
import hcc3d.rng
import hcc3d.tensor
from hcc3d.tensor import Tensor
from hcc3d.tests import oracle


def test_parameter_names_follow_attribute_order():
    attn = hcc3d.layers.MultiHeadCrossAttention(hcc3d.rng.Rng(0), 8, 2)
    assert [name for name, _ in attn.named_parameters()] == [
        "ln_q.gain",
        "ln_q.offset",
        "ln_k.gain",
        "ln_v.gain",
        "ln_v.offset",
        "wq.weight",
        "wq.bias",
        "wk.weight",
        "wv.weight",
        "wv.bias",
        "wo.weight",
        "wo.bias",
    ]
    assert attn.num_parameters() == 4 * 8 * 8 + 8 * 8


def test_xavier_uniform_bound():
    w = hcc3d.layers.xavier_uniform(hcc3d.rng.Rng(0), 30, 50)
    bound = math.sqrt(6 / 80)
    assert w.shape == (30, 50)
    assert np.abs(w.data).max() <= bound
    assert np.abs(w.data).max() > 0.9 * bound

    with pytest.raises(hcc3d.errors.ArgumentError):
        hcc3d.layers.xavier_uniform(hcc3d.rng.Rng(0), 0, 5)


def test_sinusoidal_init():
    table = hcc3d.layers.sinusoidal_init(4, 6, dtype="float64").data
    np.testing.assert_array_equal(table[0, 0::2], 0.0)
    np.testing.assert_array_equal(table[0, 1::2], 1.0)
    assert table[3, 0] == pytest.approx(math.sin(3))
    assert table[2, 3] == pytest.approx(math.cos(2 / 10000 ** (2 / 6)))

    with pytest.raises(hcc3d.errors.ConfigError):
        hcc3d.layers.sinusoidal_init(4, 5)


def test_linear():
    layer = hcc3d.layers.Linear(hcc3d.rng.Rng(0), 3, 2, dtype="float64")
    x = Tensor(np.ones((4, 3)))
    np.testing.assert_allclose(layer(x).data, oracle.linear(x.data, layer))
    assert hcc3d.layers.Linear(hcc3d.rng.Rng(0), 3, 2, bias=False).bias is None

    with pytest.raises(hcc3d.errors.DimensionError):
        layer(Tensor(np.ones((4, 2))))


def test_layer_norm():
    ln = hcc3d.layers.LayerNorm(5, dtype="float64")
    x = Tensor(hcc3d.rng.Rng(1).normal((3, 5), mean=4.0, std=3.0))
    out = ln.normalize(x).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=-1), 1.0, rtol=1e-4)
    np.testing.assert_allclose(ln(x).data, oracle.layer_norm(x.data, 1.0, 0.0))

    assert hcc3d.layers.LayerNorm(5, offset=False).offset is None
    with pytest.raises(hcc3d.errors.DimensionError):
        ln(Tensor(np.ones((2, 4))))


def test_scorer_shape():
    scorer = hcc3d.layers.Scorer(hcc3d.rng.Rng(0), 8, dtype="float64")
    assert scorer.fc1.out_features == 2
    x = Tensor(hcc3d.rng.Rng(1).normal((5, 8)))
    out = scorer(x)
    assert out.shape == (5,)
    np.testing.assert_allclose(out.data, oracle.scorer(scorer, x.data))


def test_attention_matches_per_head_transcription():
    attn = hcc3d.layers.MultiHeadCrossAttention(hcc3d.rng.Rng(0), 12, 3, dtype="float64")
    queries = Tensor(hcc3d.rng.Rng(1).normal((4, 12)))
    context = Tensor(hcc3d.rng.Rng(2).normal((7, 12)))
    out = attn(queries, context)
    features, weights = oracle.attention(attn, queries.data, context.data)

    assert out.features.shape == (4, 12)
    assert out.weights.shape == (3, 4, 7)
    np.testing.assert_allclose(out.weights.data.sum(axis=-1), 1.0)
    np.testing.assert_allclose(out.weights.data, weights, atol=1e-12)
    np.testing.assert_allclose(out.features.data, features, atol=1e-10)


def test_attention_errors():
    with pytest.raises(hcc3d.errors.ConfigError, match="d not divisible by H"):
        hcc3d.layers.MultiHeadCrossAttention(hcc3d.rng.Rng(0), 10, 3)

    attn = hcc3d.layers.MultiHeadCrossAttention(hcc3d.rng.Rng(0), 8, 2)
    with pytest.raises(hcc3d.errors.DimensionError):
        attn(hcc3d.tensor.zeros((2, 8)), hcc3d.tensor.zeros((3, 4)))

    with pytest.raises(hcc3d.errors.DimensionError, match="empty"):
        attn(hcc3d.tensor.zeros((2, 8)), hcc3d.tensor.zeros((0, 8)))
