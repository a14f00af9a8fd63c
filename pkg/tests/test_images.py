"""PNG and PFM image IO round-trips."""

import numpy as np
import pytest

from plenocache.errors import ParseError
from plenocache.images import load_pfm, load_png, png_dims, save_pfm, save_png


def test_png_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (12, 16, 4), dtype=np.uint8)
    path = tmp_path / "a.png"
    save_png(path, img)
    back = load_png(path)
    np.testing.assert_array_equal(back, img)


def test_png_dims_without_decode(tmp_path, rng):
    img = rng.integers(0, 256, (7, 31, 4), dtype=np.uint8)
    path = tmp_path / "a.png"
    save_png(path, img)
    assert png_dims(path) == (31, 7)


def test_pfm_round_trip(tmp_path, rng):
    rgb = rng.standard_normal((9, 13, 3)).astype(np.float32) * 100
    path = tmp_path / "a.pfm"
    save_pfm(path, rgb)
    back = load_pfm(path)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, rgb)


def test_pfm_header_layout(tmp_path):
    rgb = np.zeros((2, 3, 3), dtype=np.float32)
    path = tmp_path / "a.pfm"
    save_pfm(path, rgb)
    blob = path.read_bytes()
    assert blob.startswith(b"PF\n3 2\n-1.0\n")
    assert len(blob) == len(b"PF\n3 2\n-1.0\n") + 2 * 3 * 3 * 4


def test_pfm_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.pfm"
    path.write_bytes(b"Pf\n3 2\n-1.0\n" + b"\x00" * 24)
    with pytest.raises(ParseError):
        load_pfm(path)


def test_pfm_rejects_truncation(tmp_path):
    rgb = np.ones((4, 4, 3), dtype=np.float32)
    path = tmp_path / "a.pfm"
    save_pfm(path, rgb)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(ParseError):
        load_pfm(path)


def test_pfm_rejects_garbage_header(tmp_path):
    path = tmp_path / "bad.pfm"
    path.write_bytes(b"PF\nnot numbers\n-1.0\n")
    with pytest.raises(ParseError):
        load_pfm(path)
