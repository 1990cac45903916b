import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelseg.kernels import (
    DecoderShape,
    DirectHead,
    PrototypeHead,
    decode_masks,
    encode_kernels,
    flatten_kernel,
    kernel_length,
    slice_kernel,
)


@pytest.mark.parametrize("channels,expected", [((8, 1), 169), ((16, 1), 337), ((16, 8, 1), 465),
                                               ((16, 16, 1), 609)])
def test_kernel_lengths(channels, expected):
    assert kernel_length(DecoderShape.for_features(16, channels)) == expected


@settings(max_examples=50, deadline=None)
@given(d=st.integers(3, 20), hidden=st.lists(st.integers(1, 12), max_size=3), seed=st.integers(0, 999))
def test_slice_flatten_round_trip(d, hidden, seed):
    shape = DecoderShape(d, tuple(hidden) + (1,))
    w = np.random.default_rng(seed).normal(size=kernel_length(shape))
    layers = slice_kernel(w, shape)
    assert [W.shape for W, _ in layers] == shape.layer_dims()
    assert np.array_equal(flatten_kernel(layers), w)


def test_slice_layout_weights_then_bias_input_fastest():
    shape = DecoderShape(3, (2, 1))
    (W1, b1), (W2, b2) = slice_kernel(np.arange(kernel_length(shape), dtype=float), shape)
    assert W1[:, 0].tolist() == [0, 1, 2] and W1[:, 1].tolist() == [3, 4, 5]
    assert b1.tolist() == [6, 7] and W2[:, 0].tolist() == [8, 9] and b2.tolist() == [10]


def test_slice_rejects_wrong_length():
    with pytest.raises(ValueError):
        slice_kernel(np.zeros(5), DecoderShape(3, (1,)))


def test_decoder_shape_validation():
    with pytest.raises(ValueError):
        DecoderShape(2, (1,))
    with pytest.raises(ValueError):
        DecoderShape(5, (4, 2))


def test_decode_matches_manual_forward_pass():
    rng = np.random.default_rng(0)
    shape = DecoderShape(5, (4, 1))
    F = rng.normal(size=(6, 2))
    X = rng.normal(size=(6, 3))
    c = rng.normal(size=3)
    w = rng.normal(size=kernel_length(shape))
    (W1, b1), (W2, b2) = slice_kernel(w, shape)
    Z = np.hstack([F, c - X])
    ref = 1 / (1 + np.exp(-(np.maximum(Z @ W1 + b1, 0) @ W2 + b2)[:, 0]))
    got = decode_masks(F, X, c[None], w[None], shape)[0]
    assert np.allclose(got, ref)


def test_decode_outputs_strictly_inside_unit_interval():
    shape = DecoderShape(4, (1,))
    w = np.array([1e6, 0, 0, 0, 0.0])
    M = decode_masks(np.array([[1.0], [-1.0]]), np.zeros((2, 3)), np.zeros((1, 3)), w[None], shape)
    assert np.all((M > 0) & (M < 1))


def _two_instance_setup(d=8):
    # same class (one-hot e0), distinct unit instance codes e2 / e3, as the simulator builds them
    e = np.eye(d)
    f0, f1 = e[0] + e[2], e[0] + e[3]
    F = np.vstack([np.tile(f0, (5, 1)), np.tile(f1, (5, 1))])
    X = np.vstack([np.zeros((5, 3)), np.full((5, 3), 3.0)])
    return F, X, np.stack([f0, f1]), np.array([[0.0, 0, 0], [3.0, 3, 3]])


@pytest.mark.parametrize("channels", [(1,), (8, 1), (16, 1), (16, 8, 1), (16, 16, 1), (2, 2, 1)])
def test_prototype_head_separates_instances(channels):
    F, X, F_ins, C = _two_instance_setup()
    shape = DecoderShape.for_features(8, channels)
    M = decode_masks(F, X, C, encode_kernels(F_ins, PrototypeHead(), shape), shape)
    assert np.all(M[0, :5] > 0.5) and np.all(M[0, 5:] < 0.5)
    assert np.all(M[1, 5:] > 0.5) and np.all(M[1, :5] < 0.5)


def test_prototype_axis_gates_cut_far_points():
    # same feature, but 2 m away from the centroid: only gated shapes reject it
    F = np.tile(np.eye(8)[0] + np.eye(8)[2], (2, 1))
    X = np.array([[0, 0, 0], [2.0, 0, 0]])
    shape = DecoderShape.for_features(8, (16, 1))
    M = decode_masks(F, X, np.zeros((1, 3)), encode_kernels(F[:1], PrototypeHead(), shape), shape)
    assert M[0, 0] > 0.5 > M[0, 1]


def test_direct_head_checks_width():
    shape = DecoderShape(4, (1,))
    K = np.ones((2, 5))
    assert np.array_equal(DirectHead()(K, shape), K)
    with pytest.raises(ValueError):
        DirectHead()(np.ones((2, 4)), shape)


def test_prototype_needs_hidden_width_two():
    with pytest.raises(ValueError):
        PrototypeHead().kernel(np.ones(8), DecoderShape.for_features(8, (1, 1)))
