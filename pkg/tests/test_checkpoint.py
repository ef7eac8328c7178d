import numpy as np
import pytest

from genret.checkpoint import load_checkpoint, require_stage, save_checkpoint
from genret.errors import ConfigurationError, DataFormatError
from genret.model.params import init_params, param_shapes


def test_bit_exact_round_trip(tiny_cfg, tiny_params, tmp_path):
    path = str(tmp_path / "model.grck")
    save_checkpoint(path, tiny_params, tiny_cfg, "m0", seed=42)
    params, cfg, stage, seed = load_checkpoint(path)
    assert cfg == tiny_cfg
    assert stage == "m0"
    assert seed == 42
    assert set(params) == set(tiny_params)
    for name in tiny_params:
        assert np.array_equal(params[name], tiny_params[name])
        assert params[name].dtype == np.float64


def test_two_saves_are_byte_identical(tiny_cfg, tiny_params, tmp_path):
    p1, p2 = str(tmp_path / "a.grck"), str(tmp_path / "b.grck")
    save_checkpoint(p1, tiny_params, tiny_cfg, "m1", seed=1)
    save_checkpoint(p2, tiny_params, tiny_cfg, "m1", seed=1)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bogus.grck"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
    with pytest.raises(DataFormatError, match="magic"):
        load_checkpoint(str(path))


def test_truncated_file_rejected(tiny_cfg, tiny_params, tmp_path):
    path = str(tmp_path / "model.grck")
    save_checkpoint(path, tiny_params, tiny_cfg, "m0", seed=0)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-16])
    with pytest.raises(DataFormatError, match="truncated"):
        load_checkpoint(path)


def test_unknown_stage_tag_rejected(tiny_cfg, tiny_params, tmp_path):
    with pytest.raises(ConfigurationError):
        save_checkpoint(str(tmp_path / "x.grck"), tiny_params, tiny_cfg, "m9", seed=0)


def test_require_stage_enforces_predecessor():
    require_stage("m1", "m1")
    with pytest.raises(ConfigurationError, match="expected predecessor"):
        require_stage("m0", "m1")


def test_shapes_cover_every_param(tiny_cfg, tiny_params):
    assert set(param_shapes(tiny_cfg)) == set(tiny_params)
    for name, shape in param_shapes(tiny_cfg).items():
        assert tiny_params[name].shape == shape
