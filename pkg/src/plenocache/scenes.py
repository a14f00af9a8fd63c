"""Analytic test scenes with closed-form density and factorized radiance.

Every scene is a FactorizedField whose halves are exact by construction, so
caches, factorization fits, and renders can be checked against ground truth.
Closed forms (r = |p - center|, ramp(t) = clamp(t, 0, 1)):

``lambert-sphere``
    sigma(p) = density * ramp((radius - r) / edge); one component,
    albedo modulated by a smooth cosine pattern; beta = (1,), so color is
    independent of the view direction.

``spec-sphere``
    Same density. Two components: diffuse as above plus a specular color
    scaled by a smooth spatial mask; beta(d) = (1, strength * max(0, d.axis)^n).
    The sampled radiance matrix has rank exactly 2.

``two-blobs``
    Two disjoint spheres with distinct albedos along the z axis; one
    component (sum of the per-blob colors), beta = (1,). Exercises
    occlusion ordering.

``hollow-shell``
    sigma(p) = density for r_in <= r <= r_out, else 0; constant color.
    An axial ray's alpha has the closed form 1 - exp(-density * 2*(r_out - r_in)).

All colors stay within [0, 1] so renderer energy bounds hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import FactorizedField
from .geometry import Aabb, normalize


def _ramp(t: np.ndarray) -> np.ndarray:
    return np.clip(t, 0.0, 1.0)


@dataclass(frozen=True)
class AnalyticScene(FactorizedField):
    """Base for catalog scenes; subclasses define the closed forms."""

    scene_id = "abstract"

    @property
    def default_aabb(self) -> Aabb:
        return Aabb((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))

    def sigma_batch(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def components_batch(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval_pos_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = np.asarray(points, dtype=np.float64)
        return self.sigma_batch(points), self.components_batch(points)


@dataclass(frozen=True)
class LambertSphere(AnalyticScene):
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.35
    density: float = 60.0
    edge: float = 0.06
    albedo: tuple = (0.8, 0.35, 0.25)

    scene_id = "lambert-sphere"

    @property
    def d(self) -> int:
        return 1

    def sigma_batch(self, points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(points - np.asarray(self.center), axis=-1)
        return self.density * _ramp((self.radius - r) / self.edge)

    def components_batch(self, points: np.ndarray) -> np.ndarray:
        m = 0.7 + 0.3 * (
            np.cos(4.0 * points[:, 0]) * np.cos(3.0 * points[:, 1]) * np.cos(2.0 * points[:, 2])
        )
        comp = m[:, None] * np.asarray(self.albedo)
        return comp[:, None, :]

    def eval_dir_batch(self, dirs: np.ndarray) -> np.ndarray:
        return np.ones((len(dirs), 1))


@dataclass(frozen=True)
class SpecSphere(AnalyticScene):
    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 0.35
    density: float = 60.0
    edge: float = 0.06
    albedo: tuple = (0.8, 0.35, 0.25)
    spec_color: tuple = (0.9, 0.9, 0.95)
    spec_axis: tuple = (0.3, 0.5, 0.8)
    spec_strength: float = 0.5
    spec_exponent: float = 4.0

    scene_id = "spec-sphere"

    @property
    def d(self) -> int:
        return 2

    def sigma_batch(self, points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(points - np.asarray(self.center), axis=-1)
        return self.density * _ramp((self.radius - r) / self.edge)

    def components_batch(self, points: np.ndarray) -> np.ndarray:
        m = 0.7 + 0.3 * (
            np.cos(4.0 * points[:, 0]) * np.cos(3.0 * points[:, 1]) * np.cos(2.0 * points[:, 2])
        )
        diffuse = m[:, None] * np.asarray(self.albedo)
        s = 0.2 + 0.2 * np.cos(2.0 * points[:, 0] + points[:, 2])
        spec = s[:, None] * np.asarray(self.spec_color)
        return np.stack([diffuse, spec], axis=1)

    def eval_dir_batch(self, dirs: np.ndarray) -> np.ndarray:
        axis = normalize(np.asarray(self.spec_axis, dtype=np.float64))
        lobe = self.spec_strength * np.maximum(0.0, dirs @ axis) ** self.spec_exponent
        return np.stack([np.ones(len(dirs)), lobe], axis=-1)


@dataclass(frozen=True)
class TwoBlobs(AnalyticScene):
    center_a: tuple = (0.0, 0.0, -0.25)
    center_b: tuple = (0.0, 0.0, 0.25)
    radius: float = 0.2
    density: float = 80.0
    edge: float = 0.05
    albedo_a: tuple = (0.85, 0.15, 0.1)
    albedo_b: tuple = (0.1, 0.2, 0.9)

    scene_id = "two-blobs"

    @property
    def d(self) -> int:
        return 1

    def _ramps(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ra = np.linalg.norm(points - np.asarray(self.center_a), axis=-1)
        rb = np.linalg.norm(points - np.asarray(self.center_b), axis=-1)
        return (
            _ramp((self.radius - ra) / self.edge),
            _ramp((self.radius - rb) / self.edge),
        )

    def sigma_batch(self, points: np.ndarray) -> np.ndarray:
        ma, mb = self._ramps(points)
        return self.density * (ma + mb)

    def components_batch(self, points: np.ndarray) -> np.ndarray:
        ma, mb = self._ramps(points)
        comp = ma[:, None] * np.asarray(self.albedo_a) + mb[:, None] * np.asarray(self.albedo_b)
        return comp[:, None, :]

    def eval_dir_batch(self, dirs: np.ndarray) -> np.ndarray:
        return np.ones((len(dirs), 1))


@dataclass(frozen=True)
class HollowShell(AnalyticScene):
    center: tuple = (0.0, 0.0, 0.0)
    r_in: float = 0.25
    r_out: float = 0.35
    density: float = 14.0
    color: tuple = (0.6, 0.7, 0.8)

    scene_id = "hollow-shell"

    @property
    def d(self) -> int:
        return 1

    def sigma_batch(self, points: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(points - np.asarray(self.center), axis=-1)
        inside = (r >= self.r_in) & (r <= self.r_out)
        return np.where(inside, self.density, 0.0)

    def components_batch(self, points: np.ndarray) -> np.ndarray:
        comp = np.broadcast_to(np.asarray(self.color), (len(points), 3)).copy()
        return comp[:, None, :]

    def eval_dir_batch(self, dirs: np.ndarray) -> np.ndarray:
        return np.ones((len(dirs), 1))

    def axial_alpha(self) -> float:
        """Closed-form alpha of a ray through the center: both shell crossings."""
        return 1.0 - float(np.exp(-self.density * 2.0 * (self.r_out - self.r_in)))


_CATALOG = (LambertSphere, SpecSphere, TwoBlobs, HollowShell)


def analytic_catalog() -> list[AnalyticScene]:
    """Default instances of every catalog scene; ids are stable strings."""
    return [cls() for cls in _CATALOG]


def scene_by_id(scene_id: str, **overrides) -> AnalyticScene:
    for cls in _CATALOG:
        if cls.scene_id == scene_id:
            return cls(**overrides)
    known = ", ".join(cls.scene_id for cls in _CATALOG)
    raise KeyError(f"unknown scene {scene_id!r}; catalog: {known}")
