"""The factorized radiance field interface.

A field splits the plenoptic function into a position half and a direction
half. The position half maps p to a density sigma plus D component triples
(u_i, v_i, w_i); the direction half maps a unit direction d to D scalar
weights beta_i shared by all three color channels. View-dependent color is
their inner product:

    c(p, d) = sum_i beta_i(d) * (u_i, v_i, w_i)(p)

Components and weights are deliberately unclamped (negative values carry the
rank-D expressiveness); colors are clamped only at the framebuffer write.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .geometry import check_unit


@dataclass(frozen=True)
class DeepRadianceMap:
    """Position-half output: density plus D component triples.

    Attributes:
        sigma: density, >= 0, in units of 1/length.
        components: (D, 3) array, row i holding (u_i, v_i, w_i).
    """

    sigma: float
    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=np.float64)
        if comps.ndim != 2 or comps.shape[1] != 3:
            raise DimensionMismatch(f"components must be (D, 3), got {comps.shape}")
        if not np.all(np.isfinite(comps)):
            raise ValueError("components must be finite")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        object.__setattr__(self, "components", comps)

    @property
    def d(self) -> int:
        return self.components.shape[0]


def combine(radiance_map: DeepRadianceMap, beta: np.ndarray) -> np.ndarray:
    """Inner-product color: c = sum_i beta_i * (u_i, v_i, w_i). Unclamped."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (radiance_map.d,):
        raise DimensionMismatch(
            f"beta has shape {beta.shape}, map has D = {radiance_map.d}"
        )
    return beta @ radiance_map.components


def combine_batch(components: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Batched combine: (n, D, 3) components x (n, D) betas -> (n, 3) colors."""
    if components.shape[:2] != betas.shape:
        raise DimensionMismatch(
            f"components {components.shape} vs betas {betas.shape}"
        )
    return np.einsum("nd,ndc->nc", betas, components)


class FactorizedField(abc.ABC):
    """Anything that evaluates the two halves of the factorization.

    Subclasses implement the batch entry points; the scalar API wraps them.
    Evaluation is pure and read-only after construction, safe for concurrent
    readers.
    """

    @property
    @abc.abstractmethod
    def d(self) -> int:
        """Number of factorization components."""

    @abc.abstractmethod
    def eval_pos_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """points (n, 3) -> (sigma (n,), components (n, D, 3))."""

    @abc.abstractmethod
    def eval_dir_batch(self, dirs: np.ndarray) -> np.ndarray:
        """Unit dirs (n, 3) -> betas (n, D). Callers pre-validate unit length."""

    def eval_pos(self, p) -> DeepRadianceMap:
        p = np.asarray(p, dtype=np.float64).reshape(1, 3)
        sigma, comps = self.eval_pos_batch(p)
        return DeepRadianceMap(float(sigma[0]), np.asarray(comps[0], dtype=np.float64))

    def eval_dir(self, d) -> np.ndarray:
        d = check_unit(np.asarray(d, dtype=np.float64)).reshape(1, 3)
        return np.asarray(self.eval_dir_batch(d)[0], dtype=np.float64)

    def color(self, p, d) -> np.ndarray:
        """Convenience: combine(eval_pos(p), eval_dir(d))."""
        return combine(self.eval_pos(p), self.eval_dir(d))
