"""Binary checkpoint format for weights and optimizer state.

Layout (all integers little-endian):

    bytes 0..3    magic "CNNW"
    u32           format version (currently 1)
    w1            u32 rows, u32 cols, rows*cols little-endian float64
    w2            same layout
    u64           optimizer step counter
    u32           number of named arrays
    per array     u32 name length, ascii name, u32 rows, u32 cols, float64 data

The named section carries mW1, vW1, mW2, vW2 so training can resume
exactly. Round-trips are bit-exact.
"""

import struct

import numpy as np

from .adam import AdamHyper, AdamState
from .neuralcore import ModelState, Weights

MAGIC = b"CNNW"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_array(f, a):
    f.write(struct.pack("<II", a.shape[0], a.shape[1]))
    f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_struct(f, fmt, path, what):
    size = struct.calcsize(fmt)
    data = f.read(size)
    if len(data) != size:
        raise CheckpointError(f"{path}: truncated while reading {what}")
    return struct.unpack(fmt, data)


def _read_array(f, path):
    rows, cols = _read_struct(f, "<II", path, "array header")
    data = f.read(rows * cols * 8)
    if len(data) != rows * cols * 8:
        raise CheckpointError(f"{path}: truncated array data ({rows}x{cols})")
    return np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(rows, cols)


def save_checkpoint(path, state: ModelState):
    named = [("mW1", state.adam.m_w1), ("vW1", state.adam.v_w1),
             ("mW2", state.adam.m_w2), ("vW2", state.adam.v_w2)]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        _write_array(f, state.weights.w1)
        _write_array(f, state.weights.w2)
        f.write(struct.pack("<Q", state.adam.step))
        f.write(struct.pack("<I", len(named)))
        for name, arr in named:
            raw = name.encode("ascii")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            _write_array(f, arr)


def load_checkpoint(path, hyper=None) -> ModelState:
    """Read a checkpoint back; hyperparameters are supplied by the caller
    (they are configuration, not state)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (version,) = _read_struct(f, "<I", path, "version")
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        w1 = _read_array(f, path)
        w2 = _read_array(f, path)
        (step,) = _read_struct(f, "<Q", path, "step counter")
        (n_named,) = _read_struct(f, "<I", path, "array count")
        named = {}
        for _ in range(n_named):
            (name_len,) = _read_struct(f, "<I", path, "name length")
            name = f.read(name_len).decode("ascii")
            named[name] = _read_array(f, path)
    missing = {"mW1", "vW1", "mW2", "vW2"} - set(named)
    if missing:
        raise CheckpointError(f"{path}: missing optimizer arrays {sorted(missing)}")
    adam = AdamState(m_w1=named["mW1"], v_w1=named["vW1"],
                     m_w2=named["mW2"], v_w2=named["vW2"], step=step)
    return ModelState(weights=Weights(w1, w2), adam=adam,
                      hyper=hyper if hyper is not None else AdamHyper())
