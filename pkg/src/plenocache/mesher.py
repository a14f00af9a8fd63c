"""Collision mesh extraction from the baked density cache.

Pipeline: dense signed level-set volume from the position cache, optional
conservative 2x downsampling, then table-driven isosurface extraction over
the lattice of voxel centers. Vertices are welded by global edge key so the
mesh is crack-free and independent of cell traversal order.

The "signed field" is sigma minus the threshold (a level-set indicator, not
a true distance). A zero threshold meshes the sigma > 0 boundary via a tiny
positive epsilon so exactly-empty space stays strictly outside.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .cache import PositionCache
from .errors import TooSmall
from .geometry import Aabb
from .mc_tables import CORNER_OFFSETS, EDGE_ENDPOINTS, EDGE_TABLE, TRI_TABLE

ZERO_THRESHOLD_EPS = 1e-6
DEGENERATE_AREA = 1e-12

# Winding fix so that positive-inside fields come out with outward normals
# (checked by signed-volume tests on sphere meshes).
_FLIP_WINDING = True


@dataclass(frozen=True)
class DensityVolume:
    """Dense scalar field sampled at voxel centers of a grid over an AABB.

    Density sources are nonnegative; level-set fields (to_occupancy output)
    are signed. Values must be finite either way.
    """

    values: np.ndarray
    aabb: Aabb

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 3 or min(v.shape) < 2:
            raise ValueError(f"volume needs >= 2 voxels per axis, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("volume contains non-finite values")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        return self.aabb.extent / np.asarray(self.dims, dtype=np.float64)

    def node_position(self, idx) -> np.ndarray:
        """World position of a lattice node (voxel center)."""
        return self.aabb.lo + (np.asarray(idx, dtype=np.float64) + 0.5) * self.spacing


@dataclass(frozen=True)
class CollisionMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    threshold: float

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle indices out of range")

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_corners(self) -> np.ndarray:
        """(m, 3, 3) corner positions."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def signed_volume(self) -> float:
        """Divergence-theorem volume; positive for closed outward meshes."""
        c = self.triangle_corners()
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)


def to_occupancy(cache: PositionCache, threshold: float = 0.0) -> DensityVolume:
    """Signed level-set field f = sigma - threshold on the cache grid.

    threshold 0 uses a tiny epsilon so empty voxels (sigma exactly 0) are
    strictly outside. The volume box is the cache's grid box, keeping voxel
    centers aligned between cache and mesh lattice.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    effective = threshold if threshold > 0 else ZERO_THRESHOLD_EPS
    values = np.zeros(int(np.prod(cache.dims)), dtype=np.float64)
    flats = cache.occupied_flats()
    values[flats] = cache.sigma[cache._row_index[flats]]
    values -= effective
    return DensityVolume(values.reshape(cache.dims), cache.grid_box)


def pad_empty(volume: DensityVolume, layers: int = 2, value: float = -ZERO_THRESHOLD_EPS) -> DensityVolume:
    """Surround the volume with strictly-outside layers so occupancy that
    touches the grid boundary still extracts as a closed surface."""
    out = np.pad(volume.values, layers, constant_values=value)
    margin = layers * volume.spacing
    return DensityVolume(out, Aabb(volume.aabb.lo - margin, volume.aabb.hi + margin))


def inflate(volume: DensityVolume, value: float = ZERO_THRESHOLD_EPS) -> DensityVolume:
    """Grow the positive region by one voxel (26-neighborhood).

    Nearest-neighbor cache lookups treat a whole voxel as occupied, but the
    isosurface runs through the lattice of voxel centers, so an un-inflated
    mesh can miss rays that clip the outer half of a boundary voxel. One
    ring of small positive values pushes the surface past every occupied
    voxel's hull, making mesh-gated marching lossless.
    """
    pos = volume.values > 0
    dil = pos.copy()
    for axis in range(3):  # separable box dilation, no wraparound
        upper = [slice(None)] * 3
        lower = [slice(None)] * 3
        upper[axis] = slice(1, None)
        lower[axis] = slice(None, -1)
        upper, lower = tuple(upper), tuple(lower)
        grown = dil.copy()
        grown[upper] |= dil[lower]
        grown[lower] |= dil[upper]
        dil = grown
    out = volume.values.copy()
    out[dil & ~pos] = value
    return DensityVolume(out, volume.aabb)


def downsample(volume: DensityVolume, factor: int = 2) -> DensityVolume:
    """Conservative max-pool by 2: no occupied fine voxel ever disappears.

    Odd axes are padded by edge replication; the box is extended so coarse
    voxels are exactly 2x the fine ones and nest over their children.
    """
    if factor != 2:
        raise ValueError("only factor 2 is supported")
    v = volume.values
    if min(v.shape) < 4:
        raise TooSmall(f"downsample needs >= 4 voxels per axis, got {v.shape}")
    pad = [(0, s % 2) for s in v.shape]
    v = np.pad(v, pad, mode="edge")
    out = v.reshape(v.shape[0] // 2, 2, v.shape[1] // 2, 2, v.shape[2] // 2, 2).max(axis=(1, 3, 5))
    hi = volume.aabb.lo + np.asarray(out.shape) * 2.0 * volume.spacing
    return DensityVolume(out, Aabb(volume.aabb.lo, hi))


# Static per-local-edge data for global edge keys: the axis each edge runs
# along and the node offset of its lower endpoint within the cell.
_EDGE_AXIS = np.empty(12, dtype=np.int64)
_EDGE_BASE = np.empty((12, 3), dtype=np.int64)
for _e in range(12):
    _a, _b = EDGE_ENDPOINTS[_e]
    _oa, _ob = CORNER_OFFSETS[_a], CORNER_OFFSETS[_b]
    _diff = np.nonzero(_oa != _ob)[0]
    assert len(_diff) == 1
    _EDGE_AXIS[_e] = _diff[0]
    _EDGE_BASE[_e] = np.minimum(_oa, _ob)


def marching_cubes(volume: DensityVolume, iso: float = 0.0) -> CollisionMesh:
    """Standard 256-case extraction of the iso level set; inside is f > iso.

    Linear interpolation along crossed edges, vertices welded by global edge
    key, triangles below the degenerate-area floor dropped.
    """
    f = volume.values
    nx, ny, nz = f.shape
    inside = f > iso

    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.uint16)
    for c in range(8):
        ox, oy, oz = CORNER_OFFSETS[c]
        corner = inside[ox : ox + nx - 1, oy : oy + ny - 1, oz : oz + nz - 1]
        case |= corner.astype(np.uint16) << c

    active = np.nonzero(EDGE_TABLE[case].ravel() != 0)[0]
    if len(active) == 0:
        return CollisionMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64), iso)

    cdy, cdz = ny - 1, nz - 1
    ck = active % cdz
    cj = (active // cdz) % cdy
    ci = active // (cdz * cdy)
    cases = case.reshape(-1)[active]
    edges = EDGE_TABLE[cases]

    lo = volume.aabb.lo
    sp = volume.spacing

    # Interpolate every crossed edge of every active cell; record global key
    # and world position per (cell, local edge).
    vert_key = np.full((len(active), 12), -1, dtype=np.int64)
    all_keys, all_pos = [], []
    for e in range(12):
        sel = np.nonzero((edges >> e) & 1)[0]
        if len(sel) == 0:
            continue
        a, b = EDGE_ENDPOINTS[e]
        na = np.stack([ci[sel], cj[sel], ck[sel]], axis=1) + CORNER_OFFSETS[a]
        nb = np.stack([ci[sel], cj[sel], ck[sel]], axis=1) + CORNER_OFFSETS[b]
        fa = f[na[:, 0], na[:, 1], na[:, 2]]
        fb = f[nb[:, 0], nb[:, 1], nb[:, 2]]
        t = (iso - fa) / (fb - fa)
        pa = lo + (na + 0.5) * sp
        pb = lo + (nb + 0.5) * sp
        pos = pa + t[:, None] * (pb - pa)

        base = np.stack([ci[sel], cj[sel], ck[sel]], axis=1) + _EDGE_BASE[e]
        key = ((_EDGE_AXIS[e] * nx + base[:, 0]) * ny + base[:, 1]) * nz + base[:, 2]
        vert_key[sel, e] = key
        all_keys.append(key)
        all_pos.append(pos)

    all_keys = np.concatenate(all_keys)
    all_pos = np.concatenate(all_pos)

    # Assemble triangle corner keys in cell-major, table order.
    tt = TRI_TABLE[cases]
    valid = tt >= 0
    rows = np.broadcast_to(np.arange(len(active))[:, None], tt.shape)
    corner_keys = vert_key[rows[valid], tt[valid]]

    # Weld: number unique keys by first occurrence in the corner stream.
    uniq, inverse = np.unique(corner_keys, return_inverse=True)
    first_seen = np.full(len(uniq), len(corner_keys), dtype=np.int64)
    np.minimum.at(first_seen, inverse, np.arange(len(corner_keys)))
    order = np.argsort(first_seen, kind="stable")
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[order] = np.arange(len(uniq))
    tris = rank[inverse].reshape(-1, 3)

    # Positions per unique key (duplicates across cells are bitwise equal).
    k_uniq, k_first = np.unique(all_keys, return_index=True)
    verts = np.empty((len(uniq), 3), dtype=np.float64)
    verts[rank] = all_pos[k_first[np.searchsorted(k_uniq, uniq)]]

    if _FLIP_WINDING:
        tris = tris[:, ::-1]

    mesh = CollisionMesh(verts, tris, iso)
    return _drop_degenerate(mesh)


def _drop_degenerate(mesh: CollisionMesh) -> CollisionMesh:
    if mesh.n_triangles == 0:
        return mesh
    keep = mesh.areas() > DEGENERATE_AREA
    tris = mesh.triangles[keep]
    used = np.unique(tris)
    remap = np.full(len(mesh.vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return CollisionMesh(mesh.vertices[used], remap[tris], mesh.threshold)


def export_stl(mesh: CollisionMesh, path) -> None:
    """Binary STL (debug export)."""
    c = mesh.triangle_corners().astype(np.float32)
    n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    lens = np.linalg.norm(n, axis=1, keepdims=True)
    n = np.where(lens > 0, n / np.maximum(lens, 1e-30), 0.0).astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", len(c)))
        rec = np.zeros(len(c), dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
        rec["n"] = n
        rec["v"] = c
        fh.write(rec.tobytes())


def export_obj(mesh: CollisionMesh, path) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def mesh_from_cache(
    cache: PositionCache, threshold: float = 0.0, max_dims: int = 512
) -> CollisionMesh:
    """Full pipeline: level set, downsample while any axis exceeds max_dims,
    then extract."""
    vol = to_occupancy(cache, threshold)
    while max(vol.dims) > max_dims and min(vol.dims) >= 4:
        vol = downsample(vol)
    mesh = marching_cubes(inflate(pad_empty(vol)), 0.0)
    return CollisionMesh(mesh.vertices, mesh.triangles, threshold)
