import pytest

import hcc3d.errors
import hcc3d.hash
import hcc3d.manifest


def test_write_and_verify(tmp_path):
    (tmp_path / "report.json").write_text("{}")
    (tmp_path / "ckpt").mkdir()
    (tmp_path / "ckpt" / "a.hcct").write_bytes(b"abc")
    (tmp_path / "timing.json").write_text('{"seconds": 1.5}')

    manifest = hcc3d.manifest.write(
        tmp_path,
        command="train",
        argv=["train", "--out", "x"],
        artifacts=[tmp_path / "report.json", tmp_path / "ckpt"],
        volatile=[tmp_path / "timing.json"],
        config_hash="abc",
        seed=3,
    )
    assert [a.path for a in manifest.artifacts] == ["ckpt/a.hcct", "report.json"]
    assert manifest.artifacts[0].digest == hcc3d.hash.blob(b"abc")
    assert manifest.volatile == ["timing.json"]
    assert hcc3d.manifest.read(tmp_path) == manifest
    assert hcc3d.manifest.verify(tmp_path) == []

    (tmp_path / "timing.json").write_text('{"seconds": 2.5}')
    assert hcc3d.manifest.verify(tmp_path) == []

    (tmp_path / "ckpt" / "a.hcct").write_bytes(b"abd")
    (tmp_path / "report.json").unlink()
    assert hcc3d.manifest.verify(tmp_path) == ["ckpt/a.hcct", "report.json"]


def test_missing_artifact(tmp_path):
    with pytest.raises(hcc3d.errors.ArtifactNotFound):
        hcc3d.manifest.write(
            tmp_path, command="x", argv=[], artifacts=[tmp_path / "missing.json"]
        )


def test_invalid_manifest(tmp_path):
    (tmp_path / hcc3d.manifest.MANIFEST_FILE).write_text("{}")
    with pytest.raises(hcc3d.errors.FormatError):
        hcc3d.manifest.read(tmp_path)
