import struct

import numpy as np
import pytest

from attnloco.checkpoint import MAGIC, Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from attnloco.cli import policy_from_checkpoint, train
from attnloco.errors import CheckpointError

from helpers import small_config


def _ckpt():
    rng = np.random.default_rng(0)
    return Checkpoint(
        config={"seed": 3, "robot": "quadruped"},
        weights={"enc.w": rng.standard_normal((3, 4)).astype(np.float32), "log_std": np.zeros(12)},
        optimizer={"m.0": rng.standard_normal(5), "step": np.array(7)},
        curriculum=dict(families=["flat", "stairs"], family=np.array([0, 1]), level=np.array([2, 9]), frozen=False,
                        rng={"bit_generator": "PCG64", "state": {"state": 1, "inc": 3}, "has_uint32": 0, "uinteger": 0}),
        epoch=12,
        stage=1,
        rng_states={"trainer": {"a": 1}},
    )


def test_round_trip_and_identical_resave(tmp_path):
    ck = _ckpt()
    p = save_checkpoint(ck, tmp_path / "a.ckpt")
    back = load_checkpoint(p)
    for k, v in ck.weights.items():
        np.testing.assert_array_equal(back.weights[k], v)
        assert back.weights[k].dtype == v.dtype
    np.testing.assert_array_equal(back.curriculum["level"], [2, 9])
    assert (back.epoch, back.stage, back.config) == (12, 1, ck.config)
    save_checkpoint(back, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_truncated_checkpoint():
    data = encode_checkpoint(_ckpt())
    with pytest.raises(CheckpointError, match="truncated payload"):
        decode_checkpoint(data[:-10])
    with pytest.raises(CheckpointError, match="truncated header"):
        decode_checkpoint(data[:20])


def test_corrupt_payload_fails_checksum():
    data = bytearray(encode_checkpoint(_ckpt()))
    data[-3] ^= 0xFF
    with pytest.raises(CheckpointError, match="checksum"):
        decode_checkpoint(bytes(data))


def test_bad_magic_and_version():
    data = encode_checkpoint(_ckpt())
    with pytest.raises(CheckpointError, match="magic"):
        decode_checkpoint(b"NOTACKPT" + data[8:])
    bumped = MAGIC + struct.pack("<I", 99) + data[12:]
    with pytest.raises(CheckpointError, match="version 99"):
        decode_checkpoint(bumped)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_stage_two_starts_from_stage_one_encoder(tmp_path):
    cfg = small_config(epochs=1)
    first = train(cfg, 1, None, tmp_path / "s1", seed=0, epochs=1)
    stage1 = load_checkpoint(first)
    second = train(small_config(), 2, str(first), tmp_path / "s2", seed=0, epochs=0)
    stage2 = load_checkpoint(second)
    assert stage2.stage == 2
    enc = [k for k in stage1.weights if k.startswith("encoder.")]
    assert enc
    for k in enc:
        np.testing.assert_array_equal(stage2.weights[k], stage1.weights[k])
    _, policy = policy_from_checkpoint(stage2)
    for k in enc:
        np.testing.assert_array_equal(policy.state_dict()[k], stage1.weights[k])


def test_weights_that_do_not_fit_the_config(tmp_path):
    first = train(small_config(epochs=1), 1, None, tmp_path, seed=0, epochs=1)
    ck = load_checkpoint(first)
    ck.config["model"]["dim"] = 12
    ck.config["model"]["heads"] = 3
    with pytest.raises(CheckpointError, match="do not match"):
        policy_from_checkpoint(ck)
