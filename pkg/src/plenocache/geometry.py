"""Bounding boxes, unit directions, and direction sampling.

Positions and directions are plain numpy arrays: shape (3,) for a single
point, (n, 3) for batches. Directions are unit length; callers that accept
user input should validate with :func:`check_unit`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateAabb, NonUnitDirection

UNIT_TOL = 1e-6


def as_point(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {p.shape}")
    return p


def check_unit(d, tol: float = UNIT_TOL) -> np.ndarray:
    """Validate that d (3,) or (n,3) is unit length within tol."""
    d = np.asarray(d, dtype=np.float64)
    n = np.linalg.norm(d, axis=-1)
    if not np.all(np.abs(n - 1.0) <= tol):
        worst = float(np.max(np.abs(n - 1.0)))
        raise NonUnitDirection(f"direction norm deviates from 1 by {worst:.3g}")
    return d


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / n


@dataclass(frozen=True, eq=False)
class Aabb:
    """Axis-aligned bounding box, lo < hi componentwise."""

    lo: np.ndarray
    hi: np.ndarray

    def __init__(self, lo, hi):
        lo = as_point(lo)
        hi = as_point(hi)
        if not np.all(lo < hi):
            raise DegenerateAabb(f"aabb min {lo} not strictly below max {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Aabb):
            return NotImplemented
        return bool(np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi))

    def __hash__(self):
        return hash((tuple(self.lo), tuple(self.hi)))

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def longest(self) -> float:
        return float(np.max(self.extent))

    def grid_dims(self, k: int) -> tuple[int, int, int]:
        """Voxel counts per axis: k divides the longest side, voxels stay cubes.

        Other axes get ceil(k * extent_ratio) voxels, so the voxel grid may
        overhang hi by less than one voxel on the shorter axes.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        edge = self.longest / k
        dims = np.ceil(self.extent / edge - 1e-9).astype(int)
        return int(dims[0]), int(dims[1]), int(dims[2])

    def voxel_edge(self, k: int) -> float:
        return self.longest / k

    def contains(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)

    def ray_span(self, origins: np.ndarray, dirs: np.ndarray):
        """Entry/exit parameters of rays against the box (slab method).

        Returns (t_in, t_out); a ray misses the box when t_in > t_out.
        """
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            ta = (self.lo - origins) * inv
            tb = (self.hi - origins) * inv
        lo = np.minimum(ta, tb)
        hi = np.maximum(ta, tb)
        # Axis-parallel rays: inf*0 produces nan; such an axis constrains
        # nothing if the origin is inside its slab, everything otherwise.
        par = dirs == 0.0
        if np.any(par):
            orig_in = (origins >= self.lo) & (origins <= self.hi)
            lo = np.where(par, np.where(orig_in, -np.inf, np.inf), lo)
            hi = np.where(par, np.where(orig_in, np.inf, -np.inf), hi)
        return np.max(lo, axis=-1), np.min(hi, axis=-1)


def to_spherical(d: np.ndarray) -> np.ndarray:
    """Unit direction(s) to (theta, phi), theta in [0, pi], phi in [0, 2pi)."""
    d = np.asarray(d, dtype=np.float64)
    theta = np.arccos(np.clip(d[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[..., 1], d[..., 0]), 2.0 * np.pi)
    return np.stack([theta, phi], axis=-1)


def from_spherical(tp: np.ndarray) -> np.ndarray:
    tp = np.asarray(tp, dtype=np.float64)
    theta, phi = tp[..., 0], tp[..., 1]
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def fibonacci_sphere(q: int) -> np.ndarray:
    """Deterministic set of q roughly uniform unit directions (q, 3).

    q = 1 degenerates to the single direction (0, 0, 1).
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    if q == 1:
        return np.array([[0.0, 0.0, 1.0]])
    i = np.arange(q, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / q
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    ga = np.pi * (3.0 - np.sqrt(5.0))
    ang = ga * i
    return np.stack([r * np.cos(ang), r * np.sin(ang), z], axis=-1)
