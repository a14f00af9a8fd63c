"""Baked caches: sparse voxel position cache and dense direction cache.

Baking tabulates the two field halves so rendering becomes memory lookups.
The position cache stores, for every voxel whose density clears the
occupancy threshold, sigma plus the D component triples at the voxel center
(float32, the file payload precision). Sparse layout: a one-bit-per-voxel
occupancy bitmap plus a directory of occupied 8x8x8 voxel blocks mapping to
payload offsets; payload rows are grouped by block, voxel-ordered within.

Grid convention: k divides the longest AABB side, voxels are cubes, shorter
axes round up, so the grid box may overhang the AABB by under one voxel on
those axes. Position lookups are nearest-neighbor (the containing voxel);
points outside the grid box return Empty (sigma 0, zero components).

The direction cache is dense: either a CubeGrid (l^3 lattice over unit
vector components, trilinear lookup) or an EquirectGrid (l x l lattice over
theta in [0, pi], phi in [0, 2pi) with wraparound, bilinear lookup).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import container
from .errors import InvalidSparsity, ParseError
from .fields import DeepRadianceMap, FactorizedField
from .geometry import Aabb, check_unit, from_spherical, normalize, to_spherical

KIND = b"CACH"
BLOCK_EDGE = 8
BAKE_CHUNK = 1 << 17  # voxels per evaluation chunk; fixed so results never
                      # depend on worker count


class PositionCache:
    """Sparse voxel cache of the position half of a field."""

    def __init__(
        self,
        aabb: Aabb,
        k: int,
        d: int,
        density_threshold: float,
        occupancy_bits: np.ndarray,
        block_ids: np.ndarray,
        block_offsets: np.ndarray,
        sigma: np.ndarray,
        components: np.ndarray,
    ):
        self.aabb = aabb
        self.k = int(k)
        self.d = int(d)
        self.density_threshold = float(density_threshold)
        self.dims = aabb.grid_dims(k)
        self.voxel_edge = aabb.voxel_edge(k)
        self.occupancy_bits = occupancy_bits
        self.block_ids = block_ids
        self.block_offsets = block_offsets
        self.sigma = sigma
        self.components = components

        total = int(np.prod(self.dims))
        if occupancy_bits.shape != ((total + 7) // 8,):
            raise ParseError(
                f"occupancy bitmap holds {occupancy_bits.size * 8} bits, grid has {total} voxels"
            )
        occ = np.unpackbits(occupancy_bits, count=total).astype(bool)
        n_occ = int(occ.sum())
        if sigma.shape != (n_occ,) or components.shape != (n_occ, self.d, 3):
            raise ParseError(
                f"payload rows {sigma.shape[0]} do not match occupancy popcount {n_occ}"
            )
        if block_ids.shape != block_offsets.shape:
            raise ParseError("block directory arrays disagree in length")
        # Dense row index, derived: payload row per voxel, -1 when empty.
        flat = np.nonzero(occ)[0]
        rows = _payload_order(flat, self.dims)
        self._row_index = np.full(total, -1, dtype=np.int64)
        self._row_index[flat] = rows
        self.alpha = n_occ / total if total else 0.0

    @property
    def n_occupied(self) -> int:
        return self.sigma.shape[0]

    @property
    def grid_box(self) -> Aabb:
        """The voxel grid's own box (may overhang the AABB on short axes)."""
        hi = self.aabb.lo + np.asarray(self.dims) * self.voxel_edge
        return Aabb(self.aabb.lo, hi)

    def voxel_centers(self, flat: np.ndarray) -> np.ndarray:
        dx, dy, dz = self.dims
        iz = flat % dz
        iy = (flat // dz) % dy
        ix = flat // (dz * dy)
        idx = np.stack([ix, iy, iz], axis=-1).astype(np.float64)
        return self.aabb.lo + (idx + 0.5) * self.voxel_edge

    def occupied_flats(self) -> np.ndarray:
        total = int(np.prod(self.dims))
        occ = np.unpackbits(self.occupancy_bits, count=total).astype(bool)
        return np.nonzero(occ)[0]

    def sample_batch(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """points (n,3) -> (sigma (n,), components (n,D,3)); Empty rows are zero.

        Payload is only ever gathered for occupied voxels, never read and
        discarded, so a poisoned payload cannot leak into Empty results.
        """
        points = np.asarray(points, dtype=np.float64)
        n = len(points)
        sigma = np.zeros(n, dtype=np.float32)
        comps = np.zeros((n, self.d, 3), dtype=np.float32)
        idx = np.floor((points - self.aabb.lo) / self.voxel_edge).astype(np.int64)
        inb = np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=1)
        if not np.any(inb):
            return sigma, comps
        dx, dy, dz = self.dims
        flat = (idx[inb, 0] * dy + idx[inb, 1]) * dz + idx[inb, 2]
        rows = self._row_index[flat]
        hit = rows >= 0
        sel = np.nonzero(inb)[0][hit]
        sigma[sel] = self.sigma[rows[hit]]
        comps[sel] = self.components[rows[hit]]
        return sigma, comps

    def lookup(self, p) -> DeepRadianceMap:
        """Scalar lookup; Empty comes back as the all-zero map."""
        sigma, comps = self.sample_batch(np.asarray(p, dtype=np.float64).reshape(1, 3))
        return DeepRadianceMap(float(sigma[0]), np.asarray(comps[0], dtype=np.float64))


def _payload_order(flat: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    """Payload row of each occupied voxel: grouped by block, flat-ordered within."""
    block = _block_of(flat, dims)
    order = np.lexsort((flat, block))
    rows = np.empty(len(flat), dtype=np.int64)
    rows[order] = np.arange(len(flat))
    return rows


def _block_of(flat: np.ndarray, dims: tuple[int, int, int]) -> np.ndarray:
    dx, dy, dz = dims
    iz = flat % dz
    iy = (flat // dz) % dy
    ix = flat // (dz * dy)
    nby = (dy + BLOCK_EDGE - 1) // BLOCK_EDGE
    nbz = (dz + BLOCK_EDGE - 1) // BLOCK_EDGE
    return ((ix // BLOCK_EDGE) * nby + iy // BLOCK_EDGE) * nbz + iz // BLOCK_EDGE


class DirectionCache:
    """Dense cache of the direction half; every bin is populated."""

    def __init__(self, mode: str, payload: np.ndarray):
        if mode == "cube":
            if payload.ndim != 4 or len(set(payload.shape[:3])) != 1:
                raise ParseError(f"cube payload must be (l,l,l,D), got {payload.shape}")
        elif mode == "equirect":
            if payload.ndim != 3 or payload.shape[0] != payload.shape[1]:
                raise ParseError(f"equirect payload must be (l,l,D), got {payload.shape}")
        else:
            raise ParseError(f"unknown direction cache mode {mode!r}")
        self.mode = mode
        self.payload = payload
        self.l = payload.shape[0]
        self.d = payload.shape[-1]

    def lookup_batch(self, dirs: np.ndarray) -> np.ndarray:
        """Unit dirs (n,3) -> betas (n,D); interpolated, exact at bin centers."""
        dirs = check_unit(dirs)
        if dirs.ndim == 1:
            dirs = dirs[None, :]
        if self.mode == "cube":
            g = (dirs + 1.0) * (self.l / 2.0) - 0.5
            return _trilinear(self.payload, g)
        tp = to_spherical(dirs)
        gt = tp[:, 0] * (self.l / np.pi) - 0.5
        gp = tp[:, 1] * (self.l / (2.0 * np.pi)) - 0.5
        return _bilinear_wrap(self.payload, gt, gp)

    def lookup(self, d) -> np.ndarray:
        return self.lookup_batch(np.asarray(d, dtype=np.float64).reshape(1, 3))[0]


def _trilinear(payload: np.ndarray, g: np.ndarray) -> np.ndarray:
    l = payload.shape[0]
    g = np.clip(g, 0.0, l - 1.0)
    i0 = np.minimum(np.floor(g).astype(np.int64), l - 2) if l > 1 else np.zeros_like(g, dtype=np.int64)
    f = g - i0
    out = 0.0
    for cx in (0, 1):
        for cy in (0, 1):
            for cz in (0, 1):
                wgt = (
                    (f[:, 0] if cx else 1.0 - f[:, 0])
                    * (f[:, 1] if cy else 1.0 - f[:, 1])
                    * (f[:, 2] if cz else 1.0 - f[:, 2])
                )
                out = out + wgt[:, None] * payload[i0[:, 0] + cx, i0[:, 1] + cy, i0[:, 2] + cz]
    return out


def _bilinear_wrap(payload: np.ndarray, gt: np.ndarray, gp: np.ndarray) -> np.ndarray:
    l = payload.shape[0]
    gt = np.clip(gt, 0.0, l - 1.0)
    t0 = np.minimum(np.floor(gt).astype(np.int64), l - 2) if l > 1 else np.zeros_like(gt, dtype=np.int64)
    ft = gt - t0
    p0 = np.floor(gp).astype(np.int64)
    fp = gp - p0
    p0 = np.mod(p0, l)
    p1 = np.mod(p0 + 1, l)
    out = (
        ((1 - ft) * (1 - fp))[:, None] * payload[t0, p0]
        + ((1 - ft) * fp)[:, None] * payload[t0, p1]
        + (ft * (1 - fp))[:, None] * payload[t0 + 1, p0]
        + (ft * fp)[:, None] * payload[t0 + 1, p1]
    )
    return out


def cube_bin_centers(l: int) -> np.ndarray:
    """(l,l,l,3) lattice of bin centers over [-1,1]^3."""
    c = -1.0 + (np.arange(l) + 0.5) * (2.0 / l)
    gx, gy, gz = np.meshgrid(c, c, c, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1)


def equirect_bin_centers(l: int) -> np.ndarray:
    """(l,l,2) lattice of (theta, phi) bin centers."""
    theta = (np.arange(l) + 0.5) * (np.pi / l)
    phi = (np.arange(l) + 0.5) * (2.0 * np.pi / l)
    gt, gp = np.meshgrid(theta, phi, indexing="ij")
    return np.stack([gt, gp], axis=-1)


def bake(
    field: FactorizedField,
    aabb: Aabb,
    k: int,
    dir_mode: str = "cube",
    l: int = 64,
    density_threshold: float = 0.0,
    workers: int = 1,
) -> tuple[PositionCache, DirectionCache]:
    """Tabulate both field halves.

    Position payloads are the field's outputs at voxel centers, cast to
    float32 (file precision); a voxel is occupied iff sigma strictly exceeds
    density_threshold. Direction payloads are the field's beta at bin
    centers. Evaluation runs over fixed-size voxel chunks whose boundaries
    do not depend on the worker count, so bakes are bitwise reproducible.
    """
    if k < 1 or l < 1:
        raise ValueError("k and l must be >= 1")
    dims = aabb.grid_dims(k)
    total = int(np.prod(dims))
    edge = aabb.voxel_edge(k)

    def eval_chunk(start: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        flat = np.arange(start, min(start + BAKE_CHUNK, total), dtype=np.int64)
        dx, dy, dz = dims
        iz = flat % dz
        iy = (flat // dz) % dy
        ix = flat // (dz * dy)
        centers = aabb.lo + (np.stack([ix, iy, iz], axis=-1) + 0.5) * edge
        sigma, comps = field.eval_pos_batch(centers)
        sigma = np.asarray(sigma, dtype=np.float32)
        keep = sigma > density_threshold
        return flat[keep], sigma[keep], np.asarray(comps, dtype=np.float32)[keep]

    starts = range(0, total, BAKE_CHUNK)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(eval_chunk, starts))
    else:
        results = [eval_chunk(s) for s in starts]

    flat = np.concatenate([r[0] for r in results]) if results else np.empty(0, dtype=np.int64)
    sigma = np.concatenate([r[1] for r in results]) if results else np.empty(0, dtype=np.float32)
    comps = (
        np.concatenate([r[2] for r in results])
        if results
        else np.empty((0, field.d, 3), dtype=np.float32)
    )

    occ = np.zeros(total, dtype=bool)
    occ[flat] = True
    bits = np.packbits(occ)

    block = _block_of(flat, dims)
    order = np.lexsort((flat, block))
    sigma = sigma[order]
    comps = comps[order]
    sorted_blocks = block[order]
    block_ids, first = np.unique(sorted_blocks, return_index=True)

    pos_cache = PositionCache(
        aabb=aabb,
        k=k,
        d=field.d,
        density_threshold=density_threshold,
        occupancy_bits=bits,
        block_ids=block_ids.astype(np.int64),
        block_offsets=first.astype(np.int64),
        sigma=sigma,
        components=comps,
    )

    if dir_mode == "cube":
        centers = cube_bin_centers(l).reshape(-1, 3)
        norms = np.linalg.norm(centers, axis=1)
        dirs = np.where(norms[:, None] > 0, centers / np.maximum(norms, 1e-300)[:, None], [0.0, 0.0, 1.0])
        betas = field.eval_dir_batch(dirs).astype(np.float32)
        dir_cache = DirectionCache("cube", betas.reshape(l, l, l, field.d))
    elif dir_mode == "equirect":
        dirs = from_spherical(equirect_bin_centers(l).reshape(-1, 2))
        betas = field.eval_dir_batch(normalize(dirs)).astype(np.float32)
        dir_cache = DirectionCache("equirect", betas.reshape(l, l, field.d))
    else:
        raise ValueError(f"unknown dir_mode {dir_mode!r}")
    return pos_cache, dir_cache


@dataclass(frozen=True)
class CacheSizeReport:
    """Byte counts from the memory model, inputs echoed (widths in bits)."""

    m_nerf_bytes: int
    m_fastnerf_bytes: int
    m_fastnerf_pos_bytes: int
    m_fastnerf_dir_bytes: int
    k: int
    l: int
    d: int
    alpha: float
    s_sigma: int
    s_rgb: int
    s_uvw: int
    s_beta: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def estimate_sizes(
    k: int,
    l: int,
    d: int,
    alpha: float,
    s_sigma: int = 16,
    s_rgb: int = 24,
    s_uvw: int = 48,
    s_beta: int = 16,
) -> CacheSizeReport:
    """Memory model for the baseline and factorized caches.

        M_baseline   = alpha * (s_sigma + s_rgb) * k^3 * l^2        bits
        M_factorized = alpha * (D*s_uvw + s_sigma) * k^3            bits
                       + D * s_beta * l^2                           bits

    Evaluated exactly (Fraction arithmetic, alpha taken at its binary float
    value), bits floored to bytes at the end, per term.
    """
    for name, value in (("k", k), ("l", l), ("d", d), ("s_sigma", s_sigma),
                        ("s_rgb", s_rgb), ("s_uvw", s_uvw), ("s_beta", s_beta)):
        if int(value) != value or value < 1:
            raise InvalidSparsity(f"{name} must be a positive integer, got {value}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidSparsity(f"alpha must be within [0, 1], got {alpha}")
    a = Fraction(alpha)
    nerf_bits = a * (s_sigma + s_rgb) * k**3 * l**2
    pos_bits = a * (d * s_uvw + s_sigma) * k**3
    dir_bits = Fraction(d * s_beta * l**2)
    to_bytes = lambda bits: int(bits / 8)
    pos_b, dir_b = to_bytes(pos_bits), to_bytes(dir_bits)
    return CacheSizeReport(
        m_nerf_bytes=to_bytes(nerf_bits),
        m_fastnerf_bytes=pos_b + dir_b,
        m_fastnerf_pos_bytes=pos_b,
        m_fastnerf_dir_bytes=dir_b,
        k=k, l=l, d=d, alpha=alpha,
        s_sigma=s_sigma, s_rgb=s_rgb, s_uvw=s_uvw, s_beta=s_beta,
    )


def save_cache(pos: PositionCache, dir_cache: DirectionCache, path) -> None:
    meta = {
        "aabb_lo": list(pos.aabb.lo),
        "aabb_hi": list(pos.aabb.hi),
        "k": pos.k,
        "d": pos.d,
        "density_threshold": pos.density_threshold,
        "dir_mode": dir_cache.mode,
        "l": dir_cache.l,
    }
    arrays = {
        "occupancy": pos.occupancy_bits,
        "block_ids": pos.block_ids,
        "block_offsets": pos.block_offsets,
        "sigma": pos.sigma,
        "components": pos.components,
        "dir_payload": dir_cache.payload,
    }
    container.write_container(path, KIND, meta, arrays)


def load_cache(path) -> tuple[PositionCache, DirectionCache]:
    meta, arrays = container.read_container(path, KIND)
    try:
        aabb = Aabb(meta["aabb_lo"], meta["aabb_hi"])
        pos = PositionCache(
            aabb=aabb,
            k=int(meta["k"]),
            d=int(meta["d"]),
            density_threshold=float(meta["density_threshold"]),
            occupancy_bits=arrays["occupancy"],
            block_ids=arrays["block_ids"],
            block_offsets=arrays["block_offsets"],
            sigma=arrays["sigma"],
            components=arrays["components"],
        )
        dir_cache = DirectionCache(meta["dir_mode"], arrays["dir_payload"])
    except KeyError as e:
        raise ParseError(f"{path}: missing cache field {e}") from e
    if dir_cache.d != pos.d:
        raise ParseError(f"{path}: caches disagree on D ({pos.d} vs {dir_cache.d})")
    if dir_cache.l != int(meta["l"]):
        raise ParseError(f"{path}: direction payload resolution mismatch")
    return pos, dir_cache
