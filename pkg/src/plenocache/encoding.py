"""Fourier feature encoding for network inputs.

Each input coordinate x expands to (sin(2^j x), cos(2^j x)) for
j = 0..bands-1, giving 2*bands features per coordinate. bands = 0 means raw
passthrough. Band layout: [sin(2^0 v), cos(2^0 v), sin(2^1 v), cos(2^1 v), ...]
where each block spans the whole input vector.
"""

from __future__ import annotations

import numpy as np


def out_dim(in_dim: int, bands: int) -> int:
    return in_dim if bands == 0 else in_dim * 2 * bands


def encode(value, bands: int) -> np.ndarray:
    """Encode a scalar or vector; returns a 1-d feature vector."""
    if bands < 0:
        raise ValueError("bands must be >= 0")
    v = np.atleast_1d(np.asarray(value))
    if v.ndim != 1:
        raise ValueError("encode expects a scalar or 1-d vector")
    return encode_batch(v[None, :], bands)[0]


def encode_batch(values: np.ndarray, bands: int) -> np.ndarray:
    """Encode rows of values (n, k) into (n, k*2*bands) features."""
    if bands < 0:
        raise ValueError("bands must be >= 0")
    values = np.asarray(values)
    if bands == 0:
        return values
    n, k = values.shape
    out = np.empty((n, k * 2 * bands), dtype=values.dtype)
    for j in range(bands):
        scaled = values * values.dtype.type(2.0**j)
        out[:, 2 * j * k : (2 * j + 1) * k] = np.sin(scaled)
        out[:, (2 * j + 1) * k : (2 * j + 2) * k] = np.cos(scaled)
    return out
