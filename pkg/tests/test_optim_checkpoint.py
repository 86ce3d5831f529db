"""Adam recurrence and the binary checkpoint format."""

import struct

import numpy as np
import pytest

from dtrattunet.checkpoint import (
    CheckpointError,
    config_from_vector,
    config_vector,
    decode,
    encode,
    load_checkpoint,
    save_checkpoint,
    seed_from_tensor,
    seed_to_tensor,
)
from dtrattunet.model import build_model
from dtrattunet.nn import Parameter, ZEROS
from dtrattunet.optim import Adam
from dtrattunet.tensor import NonFiniteError
from conftest import tiny_config


def _param(value, grad=None):
    p = Parameter((len(value),), ZEROS)
    p.data = np.array(value, dtype=np.float64)
    p.grad = None if grad is None else np.array(grad, dtype=np.float64)
    return p


def test_adam_first_step_by_hand():
    p = _param([0.0], [1.0])
    Adam([("p", p)], lr=0.1).step()
    assert p.data[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-12)


def test_adam_zero_gradient_is_a_no_op():
    p = _param([0.5, -2.0], [0.0, 0.0])
    Adam([("p", p)], lr=0.1).step()
    np.testing.assert_array_equal(p.data, [0.5, -2.0])


def test_adam_two_steps_by_hand():
    p = _param([1.0], [2.0])
    opt = Adam([("p", p)], lr=0.01)
    opt.step()
    p.grad = np.array([-1.0])
    opt.step()
    m = 0.9 * 0.1 * 2.0 + 0.1 * -1.0
    v = 0.999 * 0.001 * 4.0 + 0.001 * 1.0
    mhat, vhat = m / (1 - 0.9**2), v / (1 - 0.999**2)
    expected = 1.0 - 0.01 * 2.0 / (2.0 + 1e-8) - 0.01 * mhat / (np.sqrt(vhat) + 1e-8)
    assert p.data[0] == pytest.approx(expected, rel=1e-12)


def test_adam_names_bad_parameter():
    p = _param([1.0], [np.nan])
    with pytest.raises(NonFiniteError, match="layer.weight"):
        Adam([("layer.weight", p)]).step()


def test_adam_skips_missing_grads_and_validates():
    p = _param([1.0])
    Adam([("p", p)]).step()
    assert p.data[0] == 1.0
    with pytest.raises(ValueError):
        Adam([("p", p)], lr=0.0)
    with pytest.raises(ValueError):
        Adam([("p", p), ("p", p)])


def test_adam_trajectories_repeat():
    def run():
        rng = np.random.default_rng(0)
        p = _param([0.3, -0.1, 2.0])
        opt = Adam([("p", p)], lr=0.05)
        for _ in range(20):
            p.grad = 2 * p.data + rng.standard_normal(3) * 0.1
            opt.step()
        return p.data.tobytes()

    assert run() == run()


# --- checkpoint ---------------------------------------------------------------------


def test_encoding_layout():
    blob = encode({"w": np.arange(6, dtype=np.float32).reshape(2, 3)})
    assert blob[:4] == b"DTAU"
    assert struct.unpack("<II", blob[4:12]) == (1, 1)
    assert struct.unpack("<H", blob[12:14]) == (1,)
    assert blob[14:15] == b"w"
    assert blob[15:17] == bytes([0, 2])
    assert struct.unpack("<II", blob[17:25]) == (2, 3)
    assert np.frombuffer(blob[25:], "<f4").tolist() == list(range(6))


def test_opts_section_round_trip():
    t = {"a": np.ones((2,), np.float32)}
    o = {"adam.step": np.array([3.0], np.float32)}
    tensors, opts = decode(encode(t, o))
    assert opts is not None and opts["adam.step"][0] == 3.0
    np.testing.assert_array_equal(tensors["a"], t["a"])
    assert decode(encode(t))[1] is None


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b"XTAU" + b[4:],
        lambda b: b[:4] + struct.pack("<I", 2) + b[8:],
        lambda b: b[:-3],
        lambda b: b + b"JUNK",
    ],
)
def test_corruption_rejected(mutate):
    blob = encode({"a": np.ones((3,), np.float32)})
    with pytest.raises(CheckpointError):
        decode(mutate(blob))


def test_seed_and_config_vectors():
    for seed in (0, 42, 2**64 - 1, 123456789012345):
        assert seed_from_tensor(seed_to_tensor(seed)) == seed
    cfg = tiny_config("dattunet", classes=3)
    assert config_from_vector(config_vector(cfg)) == cfg


def test_model_round_trip_bit_exact(tmp_path):
    model = build_model(tiny_config(), 3)
    save_checkpoint(tmp_path / "m.ckpt", model, epoch=4, seed=99)
    ck = load_checkpoint(tmp_path / "m.ckpt")
    assert (ck.epoch, ck.seed, ck.config) == (4, 99, model.cfg)
    back = ck.build()
    for k, v in model.state_dict().items():
        assert v.tobytes() == back.state_dict()[k].tobytes(), k


def test_save_is_deterministic(tmp_path):
    model = build_model(tiny_config(), 3)
    save_checkpoint(tmp_path / "a", model)
    save_checkpoint(tmp_path / "b", model)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
