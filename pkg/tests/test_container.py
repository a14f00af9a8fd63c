"""Binary container format: round-trips, kind/version guards, corruption."""

import numpy as np
import pytest

from plenocache import container
from plenocache.errors import ParseError, VersionMismatch


def test_round_trip_meta_and_arrays(tmp_path, rng):
    path = tmp_path / "a.bin"
    meta = {"name": "x", "nested": {"k": 3}, "list": [1, 2.5, "s"]}
    arrays = {
        "f32": rng.standard_normal((4, 5)).astype(np.float32),
        "i64": np.arange(10, dtype=np.int64).reshape(2, 5),
        "u8": np.array([0, 255, 7], dtype=np.uint8),
        "empty": np.zeros((0, 3), dtype=np.float64),
    }
    container.write_container(path, b"TEST", meta, arrays)
    meta2, arrays2 = container.read_container(path, b"TEST")
    # the reader keeps its internal array directory in the meta dict
    assert {k: meta2[k] for k in meta} == meta
    assert set(arrays2) == set(arrays)
    for k in arrays:
        assert arrays2[k].dtype == arrays[k].dtype
        assert arrays2[k].shape == arrays[k].shape
        np.testing.assert_array_equal(arrays2[k], arrays[k])


def test_write_is_deterministic(tmp_path, rng):
    a = {"x": rng.standard_normal(16)}
    p1, p2 = tmp_path / "1.bin", tmp_path / "2.bin"
    container.write_container(p1, b"TEST", {"m": 1}, a)
    container.write_container(p2, b"TEST", {"m": 1}, a)
    assert p1.read_bytes() == p2.read_bytes()


def test_kind_mismatch(tmp_path):
    path = tmp_path / "a.bin"
    container.write_container(path, b"AAAA", {}, {})
    with pytest.raises(ParseError):
        container.read_container(path, b"BBBB")


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a container at all")
    with pytest.raises(ParseError):
        container.read_container(path, b"TEST")


def test_truncated_payload(tmp_path, rng):
    path = tmp_path / "a.bin"
    container.write_container(path, b"TEST", {}, {"x": rng.standard_normal(100)})
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 64])
    with pytest.raises(ParseError):
        container.read_container(path, b"TEST")


def test_future_version_rejected(tmp_path):
    path = tmp_path / "a.bin"
    container.write_container(path, b"TEST", {}, {})
    blob = bytearray(path.read_bytes())
    # u32 version field sits at offset 8, after magic and kind
    blob[8] = 250
    path.write_bytes(bytes(blob))
    with pytest.raises(VersionMismatch):
        container.read_container(path, b"TEST")


def test_missing_file():
    with pytest.raises(OSError):
        container.read_container("/nonexistent/path.bin", b"TEST")
