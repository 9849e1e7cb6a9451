import pytest

import hcc3d.conf
import hcc3d.errors
import hcc3d.pipeline
import hcc3d.rng
import hcc3d.trace
from hcc3d.tensor import Tensor


def test_save_load(tmp_path):
    config = hcc3d.conf.desk()
    module = hcc3d.pipeline.build(config)
    x = Tensor(hcc3d.rng.Rng(0).normal((40, config.d_init)), dtype="float32")
    _, trace = hcc3d.pipeline.hcc_forward(module, x)

    index = hcc3d.trace.save(trace, tmp_path, config=config)
    assert (index.tokens_in, index.tokens_out) == (40, 12)
    assert index.reduction == pytest.approx(0.7)
    assert set(index.tensors) == set(hcc3d.trace.TENSORS)

    loaded_index, loaded = hcc3d.trace.load(tmp_path)
    assert loaded_index == index
    assert loaded.selected == trace.selected
    for name in hcc3d.trace.TENSORS:
        assert getattr(loaded, name).data.tobytes() == getattr(trace, name).data.tobytes()


def test_invalid_index(tmp_path):
    (tmp_path / hcc3d.trace.INDEX_FILE).write_text('{"tokens_in": "many"}')
    with pytest.raises(hcc3d.errors.FormatError):
        hcc3d.trace.load_index(tmp_path)
