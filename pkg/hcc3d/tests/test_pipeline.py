import os

import msgspec.json
import numpy as np
import pytest

import hcc3d.conf
import hcc3d.errors
import hcc3d.pipeline
import hcc3d.rng
import hcc3d.trace
from hcc3d.tensor import Tensor
from hcc3d.tests import oracle

acceptance = pytest.mark.skipif(
    not os.environ.get("HCC3D_ACCEPTANCE"), reason="Set HCC3D_ACCEPTANCE=1 to run"
)


def _desk64():
    return hcc3d.conf.override(hcc3d.conf.desk(), dtype="float64")


def _features(config, m, seed=0):
    return Tensor(hcc3d.rng.Rng(seed).normal((m, config.d_init)), dtype=config.dtype)


def test_parameter_count_full():
    assert hcc3d.pipeline.parameter_count(hcc3d.conf.full()) == 63_357_442


@pytest.mark.parametrize("projector", ["linear", "mlp"])
def test_parameter_count_matches_module(projector):
    config = hcc3d.conf.override(hcc3d.conf.desk(), projector=projector)
    module = hcc3d.pipeline.build(config)
    assert module.num_parameters() == hcc3d.pipeline.parameter_count(config)


def test_build_is_deterministic():
    a = hcc3d.pipeline.build(hcc3d.conf.desk())
    b = hcc3d.pipeline.build(hcc3d.conf.desk())
    for (name_a, pa), (name_b, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert name_a == name_b
        assert pa.data.tobytes() == pb.data.tobytes()


def test_forward_matches_oracle():
    config = _desk64()
    module = hcc3d.pipeline.build(config)
    for trial in range(100):
        x = _features(config, 48, seed=trial)
        z, trace = hcc3d.pipeline.hcc_forward(module, x)
        expected, selected = oracle.forward(module, x.data)
        assert trace.selected == selected
        np.testing.assert_allclose(z.data, expected, atol=1e-5, rtol=0)


def test_trace_contents():
    config = hcc3d.conf.desk()
    module = hcc3d.pipeline.build(config)
    z, trace = hcc3d.pipeline.hcc_forward(module, _features(config, 40))
    assert z.shape == (12, 64)
    assert trace.Z is z
    assert trace.F_g.shape == (8, 64)
    assert trace.F_d.shape == (4, 64)
    assert len(trace.selected) == config.K
    for name in ("A_cov", "I", "S_c", "S_sel", "ranking"):
        assert getattr(trace, name).shape == (40,)

    assert trace.A_cov.data.sum() == pytest.approx(config.H * config.n_g, abs=1e-4)


def test_gradients_reach_every_parameter():
    config = hcc3d.conf.gradcheck()
    module = hcc3d.pipeline.build(config)
    z, _ = hcc3d.pipeline.hcc_forward(module, _features(config, 24))
    z.sum().backward()
    missing = [name for name, param in module.named_parameters() if param.grad is None]
    assert missing == []


@pytest.mark.parametrize(
    "changes, m, error",
    [({}, 15, hcc3d.errors.ConfigError), ({"K": 4}, 6, hcc3d.errors.InputError)],
)
def test_too_few_tokens(changes, m, error):
    config = hcc3d.conf.override(hcc3d.conf.desk(), **changes)
    with pytest.raises(error):
        hcc3d.pipeline.hcc_forward(hcc3d.pipeline.build(config), _features(config, m))


def test_input_validation():
    config = hcc3d.conf.desk()
    module = hcc3d.pipeline.build(config)
    with pytest.raises(hcc3d.errors.DimensionError):
        hcc3d.pipeline.hcc_forward(module, Tensor(np.zeros((40, 15)), dtype="float32"))

    bad = np.zeros((40, config.d_init))
    bad[3, 2] = np.nan
    with pytest.raises(hcc3d.errors.InputError):
        hcc3d.pipeline.hcc_forward(module, Tensor(bad))


def test_float64_input_is_cast():
    config = hcc3d.conf.desk()
    module = hcc3d.pipeline.build(config)
    x = _features(config, 40)
    z32, _ = hcc3d.pipeline.hcc_forward(module, x)
    z64, _ = hcc3d.pipeline.hcc_forward(module, Tensor(x, dtype="float64"))
    assert z64.dtype == "float32"
    np.testing.assert_array_equal(z32.data, z64.data)


@pytest.mark.parametrize(
    "mode, tokens",
    [("both", 12), ("gsc_only", 8), ("adm_only", 4), ("baseline", 40)],
)
def test_ablation_modes(mode, tokens):
    config = hcc3d.conf.desk()
    module = hcc3d.pipeline.build(config)
    out = hcc3d.pipeline.ablation_forward(module, _features(config, 40), mode)
    assert out.shape == (tokens, 64)
    assert hcc3d.pipeline.tokens_out(config, mode, 40) == tokens


def test_unknown_ablation_mode():
    config = hcc3d.conf.desk()
    with pytest.raises(hcc3d.errors.UsageError):
        hcc3d.pipeline.ablation_forward(
            hcc3d.pipeline.build(config), _features(config, 40), "neither"  # type: ignore
        )


def test_checkpoint_round_trip(tmp_path):
    config = hcc3d.conf.override(hcc3d.conf.desk(), seed=3, projector="mlp")
    module = hcc3d.pipeline.build(config)
    saved = hcc3d.pipeline.save(module, tmp_path / "ckpt")
    assert saved.num_parameters == hcc3d.pipeline.parameter_count(config)

    loaded = hcc3d.pipeline.load(tmp_path / "ckpt")
    assert loaded.config == config
    for (_, pa), (_, pb) in zip(module.named_parameters(), loaded.named_parameters()):
        assert pa.data.tobytes() == pb.data.tobytes()

    x = _features(config, 40)
    assert (
        hcc3d.pipeline.hcc_forward(module, x)[0].data.tobytes()
        == hcc3d.pipeline.hcc_forward(loaded, x)[0].data.tobytes()
    )

    # Saving again is byte-identical.
    hcc3d.pipeline.save(loaded, tmp_path / "again")
    for entry in saved.parameters:
        assert (tmp_path / "ckpt" / entry.file).read_bytes() == (
            tmp_path / "again" / entry.file
        ).read_bytes()


def _edit_manifest(path, edit):
    raw = msgspec.json.decode((path / "manifest.json").read_bytes())
    edit(raw)
    (path / "manifest.json").write_bytes(msgspec.json.encode(raw))


def test_checkpoint_errors(tmp_path):
    module = hcc3d.pipeline.build(hcc3d.conf.desk())
    hcc3d.pipeline.save(module, tmp_path)

    _edit_manifest(tmp_path, lambda raw: raw["parameters"][0].update(shape=[1, 2]))
    with pytest.raises(hcc3d.errors.ShapeError, match="proj.weight"):
        hcc3d.pipeline.load(tmp_path)

    hcc3d.pipeline.save(module, tmp_path)
    _edit_manifest(tmp_path, lambda raw: raw["parameters"].pop())
    with pytest.raises(hcc3d.errors.FormatError, match="missing"):
        hcc3d.pipeline.load(tmp_path)

    hcc3d.pipeline.save(module, tmp_path)
    _edit_manifest(tmp_path, lambda raw: raw["parameters"][0].update(name="extra"))
    with pytest.raises(hcc3d.errors.FormatError):
        hcc3d.pipeline.load(tmp_path)

    hcc3d.pipeline.save(module, tmp_path)
    _edit_manifest(tmp_path, lambda raw: raw.update(version=2))
    with pytest.raises(hcc3d.errors.FormatError, match="version"):
        hcc3d.pipeline.load(tmp_path)

    with pytest.raises(hcc3d.errors.ArtifactNotFound):
        hcc3d.pipeline.load(tmp_path / "missing")


def test_full_reduction_line():
    assert f"{hcc3d.trace.reduction(513, 12):.2%}" == "97.66%"
    assert hcc3d.conf.full().tokens_out == 12


@acceptance
def test_full_dims_forward():
    config = hcc3d.conf.full()
    module = hcc3d.pipeline.build(config)
    z, trace = hcc3d.pipeline.hcc_forward(module, _features(config, 513))
    assert z.shape == (12, 2560)
    assert len(trace.selected) == 96
