import numpy as np
import pytest

from promptweave.backbone import ModelConfig
from promptweave.checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from promptweave.model import init_model

CFG = ModelConfig(d_model=8, prompt_len=4, n_heads=2, raw_dims=(5, 6, 7), seq_lens=(6, 7, 8))


def test_round_trip_is_bit_exact(tmp_path):
    params = init_model(CFG, 0)
    params.set_trainable(("prompts.",))
    optim = {"m": {"prompts.mt": np.ones((3, 4, 8), np.float32)}, "v": {"prompts.mt": np.full((3, 4, 8), 2.0, np.float32)}, "step": 7}
    ckpt = Checkpoint(params, CFG, {"stage": "prompt_tune", "eta": 0.7}, optim)
    save_checkpoint(tmp_path / "c.npz", ckpt)
    back = load_checkpoint(tmp_path / "c.npz")
    assert back.config == CFG
    assert back.meta == ckpt.meta
    assert back.params.trainable == params.trainable
    assert set(back.params) == set(params)
    for n in params:
        assert back.params[n].data.dtype == np.float32
        assert back.params[n].data.tobytes() == params[n].data.tobytes()
    assert back.optim["step"] == 7
    assert np.array_equal(back.optim["v"]["prompts.mt"], optim["v"]["prompts.mt"])


def test_saving_twice_gives_identical_bytes(tmp_path):
    ckpt = Checkpoint(init_model(CFG, 1), CFG, {"stage": "pretrain"})
    save_checkpoint(tmp_path / "a.npz", ckpt)
    save_checkpoint(tmp_path / "b.npz", ckpt)
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "nope.npz")


def test_garbage_file(tmp_path):
    (tmp_path / "bad.npz").write_bytes(b"not an archive")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.npz")


def test_wrong_version(tmp_path):
    np.savez(tmp_path / "v.npz", __format_version__=np.asarray(99))
    with pytest.raises(CheckpointError, match="version 99"):
        load_checkpoint(tmp_path / "v.npz")
