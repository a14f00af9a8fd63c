"""Camera dataset ingestion: the community transforms.json layout.

Only poses and the shared horizontal field of view are consumed; images,
when present, provide dimensions and optional comparison targets. Schema:

    {
      "camera_angle_x": <radians>,
      "frames": [
        {"file_path": "./train/r_0", "transform_matrix": [[...4x4...]]},
        ...
      ]
    }

file_path entries may omit the .png extension (the reference datasets do).
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .camera import Camera, CameraWarning
from .errors import MissingField, ParseError
from .images import png_dims

ORTHONORMAL_WARN = 1e-3


@dataclass(frozen=True)
class Frame:
    file_path: str
    transform: np.ndarray

    def resolve_image(self, root: str) -> str | None:
        """Existing image path for this frame, or None."""
        base = os.path.join(root, self.file_path)
        for candidate in (base, base + ".png"):
            if os.path.isfile(candidate):
                return candidate
        return None


@dataclass(frozen=True)
class DatasetManifest:
    camera_angle_x: float
    frames: tuple
    root: str
    width: int | None = None
    height: int | None = None

    def cameras(self, width: int | None = None, height: int | None = None) -> list[Camera]:
        w = width or self.width
        h = height or self.height
        if not w or not h:
            raise ValueError("image dimensions unknown; pass width and height")
        return [Camera(f.transform, self.camera_angle_x, w, h) for f in self.frames]


def load_manifest(path) -> DatasetManifest:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    except OSError as e:
        raise ParseError(f"{path}: {e}") from e

    if "camera_angle_x" not in raw:
        raise MissingField(f"{path}: missing 'camera_angle_x'")
    if "frames" not in raw or not isinstance(raw["frames"], list) or not raw["frames"]:
        raise MissingField(f"{path}: needs a non-empty 'frames' array")

    frames = []
    for i, fr in enumerate(raw["frames"]):
        for key in ("file_path", "transform_matrix"):
            if key not in fr:
                raise MissingField(f"{path}: frames[{i}] missing '{key}'")
        m = np.asarray(fr["transform_matrix"], dtype=np.float64)
        if m.shape != (4, 4):
            raise ParseError(f"{path}: frames[{i}] transform is {m.shape}, expected 4x4")
        if not np.all(np.isfinite(m)) or abs(np.linalg.det(m[:3, :3])) < 1e-12:
            raise ParseError(f"{path}: frames[{i}] transform is singular or non-finite")
        r = m[:3, :3]
        deviation = float(np.abs(r @ r.T - np.eye(3)).max())
        if deviation > ORTHONORMAL_WARN:
            warnings.warn(
                f"{path}: frames[{i}] rotation deviates from orthonormal by {deviation:.2e}",
                CameraWarning,
            )
        frames.append(Frame(str(fr["file_path"]), m))

    root = os.path.dirname(os.path.abspath(path))
    width = height = None
    for fr in frames:
        img = fr.resolve_image(root)
        if img is not None:
            width, height = png_dims(img)
            break
    return DatasetManifest(float(raw["camera_angle_x"]), tuple(frames), root, width, height)


def save_manifest(manifest: DatasetManifest, path) -> None:
    payload = {
        "camera_angle_x": manifest.camera_angle_x,
        "frames": [
            {"file_path": f.file_path, "transform_matrix": f.transform.tolist()}
            for f in manifest.frames
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
