import numpy as np
import pytest

import hcc3d.adm
import hcc3d.conf
import hcc3d.errors
import hcc3d.gsc
import hcc3d.rng
import hcc3d.tensor
from hcc3d.tensor import Tensor


def _config(**changes):
    return hcc3d.conf.override(hcc3d.conf.gradcheck(), **changes)


def _state(**changes):
    return hcc3d.adm.AdmState(hcc3d.rng.Rng(0), _config(**changes))


def _tokens(m=24, d=32, seed=1):
    return Tensor(hcc3d.rng.Rng(seed).normal((m, d)))


def _global_weights(x, config):
    gsc = hcc3d.gsc.GscState(
        hcc3d.rng.Rng(2), n_g=config.n_g, d=config.d, heads=config.H, dtype=config.dtype
    )
    return hcc3d.gsc.gsc_forward(gsc, x).weights


def test_coverage():
    weights = hcc3d.tensor.softmax(Tensor(hcc3d.rng.Rng(0).normal((2, 3, 10))), axis=-1)
    cov = hcc3d.adm.coverage(weights)
    assert cov.shape == (10,)
    assert cov.data.sum() == pytest.approx(6.0)

    with pytest.raises(hcc3d.errors.DimensionError):
        hcc3d.adm.coverage(Tensor(np.ones((3, 10))))
    with pytest.raises(hcc3d.errors.InputError, match="sum to 1"):
        hcc3d.adm.coverage(Tensor(np.ones((1, 1, 4))))
    with pytest.raises(hcc3d.errors.InputError, match="negative"):
        hcc3d.adm.coverage(Tensor(np.array([[[1.5, -0.5]]])))


@pytest.mark.parametrize(
    "imp, cov, lam, expected",
    [
        ([1.0], [0.0], 10.0, [0.5]),
        ([0.5], [0.0], 10.0, [0.25]),
        ([1.0], [1.0], 10.0, [1 / (1 + np.exp(10.0))]),
        ([0.8], [1.0], 10.0, [0.8 / (1 + np.exp(10.0))]),
    ],
)
def test_complementary_score(imp, cov, lam, expected):
    out = hcc3d.adm.complementary_score(Tensor(imp), Tensor(cov), lam)
    np.testing.assert_allclose(out.data, expected)


def test_complementary_score_at_full_coverage():
    out = hcc3d.adm.complementary_score(Tensor([0.8]), Tensor([1.0]), 10.0)
    assert out.item() == pytest.approx(3.63e-5, rel=1e-3)


@pytest.mark.parametrize("lam", [0.5, 10.0])
def test_complementary_score_decreases_with_coverage(lam):
    cov = np.linspace(0.0, 4.0, 17)
    out = hcc3d.adm.complementary_score(Tensor(np.full(17, 0.7)), Tensor(cov), lam)
    assert (np.diff(out.data) < 0).all()


def test_importance_of_zero_tokens():
    state = _state()
    out = hcc3d.adm.importance(state, Tensor(np.zeros((5, 32))))
    assert out.data.tolist() == [0.5] * 5


def test_complementary_score_stays_positive():
    out = hcc3d.adm.complementary_score(Tensor([0.9]), Tensor([8.0]), 10.0)
    assert 0 < out.item() < 1e-30


def test_complementary_score_errors():
    with pytest.raises(hcc3d.errors.DimensionError):
        hcc3d.adm.complementary_score(Tensor([0.5, 0.5]), Tensor([0.5]), 10.0)
    with pytest.raises(hcc3d.errors.ArgumentError):
        hcc3d.adm.complementary_score(Tensor([0.5]), Tensor([0.5]), 0.0)
    with pytest.raises(hcc3d.errors.InputError):
        hcc3d.adm.complementary_score(Tensor([0.5]), Tensor([-0.5]), 10.0)


def test_scores_are_in_open_unit_half():
    config = _config()
    state = _state()
    for seed in range(20):
        x = _tokens(seed=seed)
        _, _, scores = hcc3d.adm.mine(state, x, _global_weights(x, config))
        for name in ("S_c", "S_sel"):
            assert (scores[name].data > 0).all() and (scores[name].data < 0.5).all()

        assert scores["A_cov"].data.sum() == pytest.approx(config.H * config.n_g, abs=1e-4)


def test_selection_weights():
    state = _state()
    scores = Tensor([0.1, 0.4, 0.2, 0.3])
    weights = hcc3d.adm.selection_weights(state, scores, [1, 3])
    expected = np.exp(np.array([0.4, 0.3]) / 0.1)
    np.testing.assert_allclose(weights.data[:, 0], 2 * expected / expected.sum())
    assert weights.data.sum() == pytest.approx(2.0)

    raw = hcc3d.adm.selection_weights(_state(temperature_scaling=False), scores, [1, 3])
    np.testing.assert_allclose(raw.data[:, 0], [0.4, 0.3])


def test_gather():
    x = _tokens(m=6)
    scores = Tensor([0.1, 0.4, 0.2, 0.3, 0.0, 0.05])
    rows, selected = hcc3d.adm.gather(_state(score_scaling=False), scores, x, 2)
    assert selected == [1, 3]
    np.testing.assert_array_equal(rows.data, x.data[[1, 3]])

    with pytest.raises(hcc3d.errors.ConfigError, match="exceeds"):
        hcc3d.adm.gather(_state(), scores, x, 7)


def test_selection_score_gradients_flow_through_scaling():
    config = _config()
    state = _state()
    x = _tokens()
    f_d, _, _ = hcc3d.adm.mine(state, x, _global_weights(x, config))
    f_d.sum().backward()
    assert state.mlp1.fc1.weight.grad is not None
    assert state.mlp2.fc1.weight.grad is not None
    assert state.query.grad is not None


def test_detail_features_ignore_unselected_order():
    state = _state()
    x = _tokens()
    scores = Tensor(hcc3d.rng.Rng(3).uniform((24,)))
    f_d, selected = hcc3d.adm.select_and_compress(state, scores, x, 8)

    rest = [i for i in range(24) if i not in selected]
    shuffled = hcc3d.rng.Rng(4).permutation(len(rest))
    perm = np.arange(24)
    perm[rest] = np.asarray(rest)[shuffled]
    assert sorted(perm.tolist()) == list(range(24))

    f_d2, selected2 = hcc3d.adm.select_and_compress(
        state, Tensor(scores.data[perm]), Tensor(x.data[perm]), 8
    )
    assert selected2 == selected
    np.testing.assert_allclose(f_d2.data, f_d.data, rtol=0, atol=1e-12)


def test_select_and_compress_errors():
    state = _state()
    with pytest.raises(hcc3d.errors.ConfigError, match="smaller than"):
        hcc3d.adm.select_and_compress(state, Tensor(np.ones(24)), _tokens(), 1)


def test_fuse():
    state = _state()
    z = hcc3d.adm.fuse(state, _tokens(m=4), _tokens(m=2, seed=2))
    assert z.shape == (6, 32)
    np.testing.assert_allclose(z.data.mean(axis=-1), 0.0, atol=1e-10)

    with pytest.raises(hcc3d.errors.DimensionError):
        hcc3d.adm.fuse(state, _tokens(m=4), _tokens(m=2, d=16))


@pytest.mark.parametrize(
    "selection, n_d, tokens",
    [("adm", 2, 2), ("attention_only", 2, 2), ("mlp_only", 2, 2), ("random", 2, 2)],
)
def test_strategies(selection, n_d, tokens):
    config = _config(selection=selection, n_d=n_d)
    state = hcc3d.adm.AdmState(hcc3d.rng.Rng(0), config)
    x = _tokens()
    f_d, selected, scores = hcc3d.adm.mine(state, x, _global_weights(x, config))
    assert f_d.shape == (tokens, 32)
    assert len(selected) == config.K
    assert selected == sorted(selected)

    ranked = scores["ranking"].data
    expected = {
        "adm": scores["S_sel"].data,
        "mlp_only": scores["I"].data,
        "attention_only": 1 / (1 + np.exp(config.lam * scores["A_cov"].data)),
    }.get(selection)
    if expected is not None:
        np.testing.assert_allclose(ranked, expected, rtol=1e-10)


def test_select_all_emits_selected_rows():
    config = _config(selection="select_all", n_d=8)
    state = hcc3d.adm.AdmState(hcc3d.rng.Rng(0), config)
    x = _tokens()
    f_d, selected, _ = hcc3d.adm.mine(state, x, _global_weights(x, config))
    assert f_d.shape == (8, 32)
    assert len(selected) == 8


def test_random_selection_is_reproducible():
    config = _config(selection="random")
    x = _tokens()
    cov = hcc3d.tensor.full((24,), 0.5, dtype="float64")
    runs = [
        hcc3d.adm.mine_with_coverage(hcc3d.adm.AdmState(hcc3d.rng.Rng(0), config), x, cov)[1]
        for _ in range(2)
    ]
    assert runs[0] == runs[1]

    other = hcc3d.adm.mine_with_coverage(
        hcc3d.adm.AdmState(hcc3d.rng.Rng(0), config), _tokens(seed=9), cov
    )[1]
    assert len(other) == config.K


def test_attention_only_ignores_coverage_gradient():
    config = _config(selection="attention_only", detach_coverage=False)
    state = hcc3d.adm.AdmState(hcc3d.rng.Rng(0), config)
    x = _tokens()
    scores = hcc3d.adm.mine(state, x, _global_weights(x, config))[2]
    assert not scores["ranking"].requires_grad
    assert scores["A_cov"].requires_grad
