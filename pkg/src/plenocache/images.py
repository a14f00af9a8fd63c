"""Image IO: 8-bit RGBA PNG for display, PFM for metric-grade float data."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import ParseError


def save_png(path, rgba: np.ndarray) -> None:
    """rgba uint8 (h, w, 4), top-left origin."""
    rgba = np.asarray(rgba)
    if rgba.dtype != np.uint8 or rgba.ndim != 3 or rgba.shape[2] != 4:
        raise ValueError(f"expected uint8 (h, w, 4), got {rgba.dtype} {rgba.shape}")
    Image.fromarray(rgba, mode="RGBA").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    """Returns uint8 (h, w, 4)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGBA"))


def png_dims(path) -> tuple[int, int]:
    """(width, height) without decoding the pixel data."""
    with Image.open(path) as im:
        return im.size


def save_pfm(path, rgb: np.ndarray) -> None:
    """Linear float RGB as little-endian PFM (scale -1.0, bottom-up rows)."""
    rgb = np.asarray(rgb, dtype=np.float32)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3), got {rgb.shape}")
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"PF\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb[::-1]).tobytes())


def load_pfm(path) -> np.ndarray:
    """Returns float32 (h, w, 3), top-left origin."""
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"PF":
            raise ParseError(f"{path}: not a color PFM (magic {magic!r})")
        try:
            w, h = (int(tok) for tok in fh.readline().split())
            scale = float(fh.readline())
        except ValueError as e:
            raise ParseError(f"{path}: malformed PFM header") from e
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(w * h * 3 * 4), dtype=dtype)
        if data.size != w * h * 3:
            raise ParseError(f"{path}: truncated PFM payload")
    return data.reshape(h, w, 3)[::-1].astype(np.float32)
