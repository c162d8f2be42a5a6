import numpy as np
import pytest

from convpipe.dataio import MiniBatch, synthetic_dataset, make_batches
from convpipe.hoststage import SHARPEN_KERNEL, conv2d_valid, host_stage, maxpool2x2

from oracles import naive_conv2d, naive_maxpool2x2


def test_kernel_constant():
    assert SHARPEN_KERNEL.shape == (3, 3)
    assert SHARPEN_KERNEL.sum() == 1.0
    assert SHARPEN_KERNEL[1, 1] == 5.0
    with pytest.raises(ValueError):
        SHARPEN_KERNEL[0, 0] = 2.0  # read-only


def test_conv_all_ones_is_identity_surface():
    out = conv2d_valid(np.ones((28, 28)))
    assert out.shape == (26, 26)
    assert np.all(out == 1.0)


def test_conv_all_zero():
    assert np.all(conv2d_valid(np.zeros((28, 28))) == 0.0)


def test_conv_impulse_reproduces_kernel_pattern():
    image = np.zeros((28, 28))
    image[13, 13] = 1.0
    out = conv2d_valid(image)
    expected = naive_conv2d(image, np.asarray(SHARPEN_KERNEL))
    assert np.array_equal(out, expected)
    # the impulse paints the (180-degree rotated) kernel around (12, 12);
    # this kernel is symmetric, so the raw pattern appears as-is
    assert out[12, 12] == 5.0
    for r, c in ((11, 12), (13, 12), (12, 11), (12, 13)):
        assert out[r, c] == -1.0
    assert out[11, 11] == 0.0
    assert abs(out).sum() == 9.0


def test_conv_matches_scalar_oracle_bitwise():
    rng = np.random.default_rng(0)
    image = rng.normal(size=(28, 28))
    assert np.array_equal(conv2d_valid(image), naive_conv2d(image, np.asarray(SHARPEN_KERNEL)))


def test_conv_linearity():
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.normal(size=(28, 28))
        y = rng.normal(size=(28, 28))
        a, b = rng.normal(size=2)
        lhs = conv2d_valid(a * x + b * y)
        rhs = a * conv2d_valid(x) + b * conv2d_valid(y)
        denom = np.maximum(np.abs(rhs), 1.0)
        assert np.max(np.abs(lhs - rhs) / denom) < 1e-12


def test_conv_rejects_bad_shapes():
    with pytest.raises(ValueError):
        conv2d_valid(np.zeros((2, 2)))  # smaller than the kernel
    with pytest.raises(ValueError):
        conv2d_valid(np.zeros(5))


def test_maxpool_2x2_block():
    assert maxpool2x2(np.array([[1.0, 2.0], [3.0, 4.0]])).tolist() == [[4.0]]


def test_maxpool_constant():
    out = maxpool2x2(np.full((26, 26), 3.25))
    assert out.shape == (13, 13)
    assert np.all(out == 3.25)


def test_maxpool_ramp_matches_oracle():
    r, c = np.meshgrid(np.arange(26), np.arange(26), indexing="ij")
    feature = (26 * r + c).astype(np.float64)
    out = maxpool2x2(feature)
    assert np.array_equal(out, naive_maxpool2x2(feature))
    for i in range(13):
        for j in range(13):
            assert out[i, j] == 26 * (2 * i + 1) + (2 * j + 1)


def test_maxpool_dominates_inputs():
    rng = np.random.default_rng(2)
    feature = rng.normal(size=(26, 26))
    out = maxpool2x2(feature)
    for i in range(13):
        for j in range(13):
            block = feature[2 * i:2 * i + 2, 2 * j:2 * j + 2]
            assert out[i, j] >= block.max() - 0.0
            assert out[i, j] in block


def test_maxpool_rejects_odd_dims():
    with pytest.raises(ValueError, match="even"):
        maxpool2x2(np.zeros((25, 26)))


def test_host_stage_zero_batch():
    batch = MiniBatch(np.zeros((32, 28, 28)), np.eye(10)[np.zeros(32, int)], 0)
    conv = host_stage(batch)
    assert conv.v.shape == (32, 169)
    assert np.all(conv.v == 0.0)
    assert conv.index == 0
    assert conv.out_actual is batch.out_actual


def test_host_stage_output_width():
    images, labels = synthetic_dataset(5, 32)
    batch = make_batches(images, labels, 32)[0]
    assert host_stage(batch).v.shape[1] == 169


def test_host_stage_replicated_image_gives_identical_rows():
    images, labels = synthetic_dataset(6, 1)
    rep = MiniBatch(np.repeat(images.pixels, 32, axis=0),
                    np.eye(10)[np.zeros(32, int)], 0)
    v = host_stage(rep).v
    assert all(np.array_equal(v[0], v[i]) for i in range(32))


def test_host_stage_pure():
    images, labels = synthetic_dataset(8, 32)
    batch = make_batches(images, labels, 32)[0]
    assert np.array_equal(host_stage(batch).v, host_stage(batch).v)


def test_host_stage_flatten_is_row_major():
    images, labels = synthetic_dataset(9, 1)
    batch = MiniBatch(images.pixels, np.eye(10)[[0]], 0)
    pooled = maxpool2x2(conv2d_valid(images.pixels[0]))
    assert np.array_equal(host_stage(batch).v[0], pooled.reshape(-1))
