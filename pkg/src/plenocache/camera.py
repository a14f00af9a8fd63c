"""Pinhole cameras, rays, and the orbit pose convention.

Camera-to-world matrices follow the usual synthetic-dataset convention:
right-handed, camera looks along its local -z, +x right, +y up in camera
space. Pixel (0,0) is the top-left corner; rays pass through pixel centers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CameraWarning, NonUnitDirection, OutOfImage
from .geometry import normalize

ROTATION_TOL = 1e-5


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    dir: np.ndarray
    t_min: float = 0.0
    t_max: float = np.inf

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.dir, dtype=np.float64).reshape(3)
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "dir", d)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise NonUnitDirection(f"ray direction must be unit length, |d| = {np.linalg.norm(d)}")
        if not self.t_min < self.t_max:
            raise ValueError(f"need t_min < t_max, got [{self.t_min}, {self.t_max}]")

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.dir


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; fov is the horizontal field of view in radians."""

    camera_to_world: np.ndarray
    fov: float
    width: int
    height: int
    near: float = 0.0
    far: float = np.inf

    def __post_init__(self):
        m = np.asarray(self.camera_to_world, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, "camera_to_world", m)
        if not np.all(np.isfinite(m)):
            raise ValueError("camera matrix contains non-finite entries")
        if not 0.0 < self.fov < np.pi:
            raise ValueError(f"fov must lie in (0, pi), got {self.fov}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dims must be positive, got {self.width}x{self.height}")
        if not self.near < self.far:
            raise ValueError(f"need near < far, got [{self.near}, {self.far}]")
        r = m[:3, :3]
        deviation = float(np.abs(r @ r.T - np.eye(3)).max())
        if deviation > ROTATION_TOL:
            warnings.warn(
                f"camera rotation block deviates from orthonormal by {deviation:.2e}",
                CameraWarning,
            )

    @property
    def rotation(self) -> np.ndarray:
        return self.camera_to_world[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.camera_to_world[:3, 3]

    @property
    def focal(self) -> float:
        """Focal length in pixels (horizontal)."""
        return (self.width / 2.0) / np.tan(self.fov / 2.0)


def generate_ray(camera: Camera, px: int, py: int, jitter=None) -> Ray:
    """Ray through pixel (px, py); center of the pixel unless jittered.

    jitter, when given, is a (dx, dy) offset with both components within
    [-0.5, 0.5] (half-pixel); passing offsets keeps callers in charge of
    their own randomness so the default path stays deterministic.
    """
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise OutOfImage(f"pixel ({px}, {py}) outside {camera.width}x{camera.height}")
    dx = dy = 0.0
    if jitter is not None:
        dx, dy = float(jitter[0]), float(jitter[1])
        if max(abs(dx), abs(dy)) > 0.5:
            raise ValueError(f"jitter must stay within half a pixel, got {jitter}")
    origins, dirs = generate_rays(
        camera, np.asarray([px + dx]), np.asarray([py + dy])
    )
    return Ray(origins[0], dirs[0], camera.near, camera.far)


def generate_rays(camera: Camera, px: np.ndarray, py: np.ndarray):
    """Vectorized rays through pixel coordinates (continuous, center offset
    applied here). Returns (origins (n,3), unit dirs (n,3))."""
    f = camera.focal
    x = (np.asarray(px, dtype=np.float64) + 0.5 - camera.width / 2.0) / f
    y = -(np.asarray(py, dtype=np.float64) + 0.5 - camera.height / 2.0) / f
    d_cam = np.stack([x, y, -np.ones_like(x)], axis=-1)
    d_world = d_cam @ camera.rotation.T
    dirs = normalize(d_world)
    origins = np.broadcast_to(camera.position, dirs.shape).copy()
    return origins, dirs


def image_rays(camera: Camera, rows: slice | None = None):
    """Rays for all pixels (or a row slice), row-major. Returns
    (origins (n,3), dirs (n,3))."""
    r0, r1 = (0, camera.height) if rows is None else (rows.start, rows.stop)
    pys, pxs = np.mgrid[r0:r1, 0 : camera.width]
    return generate_rays(camera, pxs.ravel(), pys.ravel())


def orbit_to_matrix(azimuth: float, elevation: float, distance: float, target=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Camera-to-world for an orbit pose around a target point.

    Azimuth 0 / elevation 0 / distance d puts the eye at target + (0, 0, d)
    looking along -z; +y is the world up reference. This convention is
    mirrored by the viewer client and covered by a shared golden fixture.
    """
    if not -np.pi / 2 < elevation < np.pi / 2:
        raise ValueError(f"elevation must lie in (-pi/2, pi/2), got {elevation}")
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    target = np.asarray(target, dtype=np.float64).reshape(3)
    eye = target + distance * np.array(
        [
            np.cos(elevation) * np.sin(azimuth),
            np.sin(elevation),
            np.cos(elevation) * np.cos(azimuth),
        ]
    )
    forward = normalize(target - eye)
    right = normalize(np.cross(forward, np.array([0.0, 1.0, 0.0])))
    up = np.cross(right, forward)
    m = np.eye(4)
    m[:3, 0] = right
    m[:3, 1] = up
    m[:3, 2] = -forward
    m[:3, 3] = eye
    return m


def serialize_matrix(m: np.ndarray) -> list[str]:
    """Row-major fixed-6-decimal strings; the cross-language wire format for
    golden-vector comparisons."""
    # +0.0 folds negative zero so the output matches JS toFixed(6)
    return [f"{v + 0.0:.6f}" for v in np.asarray(m, dtype=np.float64).reshape(16)]
