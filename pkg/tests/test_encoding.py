"""Sinusoidal feature encoding: layout, batching, determinism."""

import numpy as np
import pytest

from plenocache.encoding import encode, encode_batch


def test_scalar_layout_alternates_sin_cos():
    x = 0.37
    out = encode(x, 3)
    expected = []
    for band in range(3):
        f = float(2**band)
        expected += [np.sin(f * x), np.cos(f * x)]
    np.testing.assert_array_equal(out, expected)


def test_vector_layout_blocks_per_band():
    v = np.array([0.1, -0.4, 2.0])
    out = encode(v, 2)
    expected = np.concatenate([np.sin(v), np.cos(v), np.sin(2 * v), np.cos(2 * v)])
    np.testing.assert_array_equal(out, expected)


def test_zero_maps_to_alternating_zero_one():
    out = encode(0.0, 4)
    np.testing.assert_array_equal(out[0::2], np.zeros(4))
    np.testing.assert_array_equal(out[1::2], np.ones(4))


def test_batch_matches_scalar_loop():
    vals = np.linspace(-2.0, 2.0, 17)
    batched = encode_batch(vals[:, None], 5)
    stacked = np.stack([encode(v, 5) for v in vals])
    np.testing.assert_array_equal(batched, stacked)


def test_batch_shape_scales_with_bands():
    vals = np.zeros((6, 3))
    out = encode_batch(vals, 4)
    assert out.shape == (6, 3 * 2 * 4)


def test_zero_bands_is_identity():
    vals = np.random.default_rng(1).standard_normal((5, 3))
    np.testing.assert_array_equal(encode_batch(vals, 0), vals)


def test_values_bounded():
    vals = np.random.default_rng(3).uniform(-10, 10, (200, 1))
    out = encode_batch(vals, 8)
    assert np.all(np.abs(out) <= 1.0)


def test_negative_bands_rejected():
    with pytest.raises(ValueError):
        encode(1.0, -1)
