import numpy as np
import pytest

from convpipe.adam import AdamHyper
from convpipe.checkpoint import (MAGIC, CheckpointError, load_checkpoint,
                                 save_checkpoint)
from convpipe.dims import ModelDims
from convpipe.hoststage import ConvBatch
from convpipe.neuralcore import ModelState, accel_kernel

DIMS = ModelDims(batch=4, image_x=8, image_y=8, kernel_x=3, kernel_y=3,
                 hidden=5, classes=10)


def _trained_state(seed, steps=3):
    rng = np.random.default_rng(seed)
    state = ModelState.initial(seed, DIMS)
    for i in range(steps):
        v = rng.normal(size=(DIMS.batch, DIMS.pool_map))
        y = np.eye(DIMS.classes)[rng.integers(0, DIMS.classes, DIMS.batch)]
        _, state = accel_kernel(ConvBatch(v, y, i), state, True)
    return state


def test_round_trip_bit_exact(tmp_path):
    state = _trained_state(0)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, state)
    back = load_checkpoint(path)
    assert np.array_equal(back.weights.w1, state.weights.w1)
    assert np.array_equal(back.weights.w2, state.weights.w2)
    assert np.array_equal(back.adam.m_w1, state.adam.m_w1)
    assert np.array_equal(back.adam.v_w1, state.adam.v_w1)
    assert np.array_equal(back.adam.m_w2, state.adam.m_w2)
    assert np.array_equal(back.adam.v_w2, state.adam.v_w2)
    assert back.adam.step == state.adam.step == 3


def test_resumed_training_matches_uninterrupted(tmp_path):
    # split a 6-step run at step 3 via a checkpoint; must land identically
    state_a = _trained_state(1, steps=6)
    state_b = _trained_state(1, steps=3)
    path = tmp_path / "mid.ckpt"
    save_checkpoint(path, state_b)
    resumed = load_checkpoint(path)
    rng = np.random.default_rng(1)
    for i in range(6):  # replay the same stream, applying only the tail
        v = rng.normal(size=(DIMS.batch, DIMS.pool_map))
        y = np.eye(DIMS.classes)[rng.integers(0, DIMS.classes, DIMS.batch)]
        if i >= 3:
            _, resumed = accel_kernel(ConvBatch(v, y, i), resumed, True)
    assert np.array_equal(resumed.weights.w1, state_a.weights.w1)
    assert np.array_equal(resumed.weights.w2, state_a.weights.w2)


def test_magic_bytes(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, _trained_state(2))
    assert path.read_bytes()[:4] == MAGIC == b"CNNW"


def test_bad_magic_names_file(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"XXXX" + bytes(100))
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path)
    assert "bad.ckpt" in str(err.value)
    assert "magic" in str(err.value)


def test_truncated_checkpoint(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, _trained_state(3))
    data = path.read_bytes()
    # every truncation point must surface as a checkpoint error, never as a
    # low-level struct/numpy failure
    for cut in (5, 9, 40, len(data) // 2, len(data) - 3):
        path.write_bytes(data[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


def test_hyper_override_on_load(tmp_path):
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, _trained_state(4))
    custom = AdamHyper(eta=0.5)
    assert load_checkpoint(path, custom).hyper.eta == 0.5
