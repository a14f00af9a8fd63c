"""Bounding volume hierarchy over the collision mesh for first-hit queries.

Build is a deterministic median split: longest axis of the triangle
centroid bounds, stable sort, halves, until a node holds at most
max_leaf triangles. Traversal prunes nodes whose box cannot beat the
best hit so far. Triangle tests use Moller-Trumbore with inclusive
barycentric bounds so rays crossing a shared edge register on both
triangles (equal t; ties resolve to whichever is examined first).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMesh
from .mesher import CollisionMesh

MAX_LEAF = 4


@dataclass(frozen=True)
class Hit:
    t: float
    triangle: int


class EmptyGate:
    """Stand-in gate for an empty collision mesh: every ray misses, so the
    renderer skips all of them."""

    def first_hit(self, origin, direction, t_min: float = 0.0):
        return None

    def first_hit_batch(self, origins, directions, t_min: float = 0.0):
        n = len(np.asarray(origins).reshape(-1, 3))
        return np.full(n, np.inf), np.full(n, -1, dtype=np.int64)


class Bvh:
    """Immutable after build; safe for concurrent readers."""

    def __init__(self, mesh: CollisionMesh, node_lo, node_hi, left, right, start, count, tri_order):
        self.mesh = mesh
        self.node_lo = node_lo
        self.node_hi = node_hi
        self.left = left
        self.right = right
        self.start = start
        self.count = count
        self.tri_order = tri_order
        self.max_leaf = MAX_LEAF
        # Triangle data in leaf order for gather-free leaf tests.
        corners = mesh.triangle_corners()[tri_order]
        self._v0 = np.ascontiguousarray(corners[:, 0])
        self._e1 = np.ascontiguousarray(corners[:, 1] - corners[:, 0])
        self._e2 = np.ascontiguousarray(corners[:, 2] - corners[:, 0])

    @property
    def n_nodes(self) -> int:
        return len(self.node_lo)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0


def build_bvh(mesh: CollisionMesh, max_leaf: int = MAX_LEAF) -> Bvh:
    if mesh.n_triangles == 0:
        raise EmptyMesh("cannot build a BVH over an empty mesh")
    corners = mesh.triangle_corners()
    centroids = corners.mean(axis=1)
    tri_lo = corners.min(axis=1)
    tri_hi = corners.max(axis=1)

    node_lo, node_hi, left, right, start, count = [], [], [], [], [], []
    order = np.arange(mesh.n_triangles)

    def alloc() -> int:
        node_lo.append(None)
        node_hi.append(None)
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(node_lo) - 1

    root = alloc()
    stack = [(root, 0, mesh.n_triangles)]
    while stack:
        node, a, b = stack.pop()
        ids = order[a:b]
        node_lo[node] = tri_lo[ids].min(axis=0)
        node_hi[node] = tri_hi[ids].max(axis=0)
        if b - a <= max_leaf:
            start[node] = a
            count[node] = b - a
            continue
        cen = centroids[ids]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        order[a:b] = ids[np.argsort(cen[:, axis], kind="stable")]
        mid = a + (b - a) // 2
        l, r = alloc(), alloc()
        left[node], right[node] = l, r
        # Push right first so the left child is processed (and laid out) first.
        stack.append((r, mid, b))
        stack.append((l, a, mid))

    return Bvh(
        mesh,
        np.asarray(node_lo),
        np.asarray(node_hi),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(start, dtype=np.int64),
        np.asarray(count, dtype=np.int64),
        order,
    )


def _box_entry(lo, hi, origin, inv_dir):
    """Slab test: entry/exit parameters of a ray against one box."""
    t0 = (lo - origin) * inv_dir
    t1 = (hi - origin) * inv_dir
    near = np.minimum(t0, t1).max()
    far = np.maximum(t0, t1).min()
    return near, far


def first_hit(bvh: Bvh, origin, direction, t_min: float = 0.0, stats: dict | None = None):
    """Closest intersection with t >= t_min, or None.

    Returns Hit(t, triangle) with the original mesh triangle index.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    with np.errstate(divide="ignore"):
        inv_dir = 1.0 / direction

    best_t = np.inf
    best_tri = -1
    stack = [0]
    while stack:
        node = stack.pop()
        near, far = _box_entry(bvh.node_lo[node], bvh.node_hi[node], origin, inv_dir)
        if np.isnan(near) or np.isnan(far):
            near, far = _box_entry_safe(bvh.node_lo[node], bvh.node_hi[node], origin, direction)
        if far < max(near, t_min) or near >= best_t:
            continue
        if bvh.is_leaf(node):
            s, c = bvh.start[node], bvh.count[node]
            if stats is not None:
                stats["tri_tests"] = stats.get("tri_tests", 0) + int(c)
            for slot in range(s, s + c):
                t = _tri_intersect(bvh._v0[slot], bvh._e1[slot], bvh._e2[slot], origin, direction, t_min)
                if t is not None and t < best_t:
                    best_t = t
                    best_tri = int(bvh.tri_order[slot])
        else:
            stack.append(bvh.right[node])
            stack.append(bvh.left[node])
    if best_tri < 0:
        return None
    return Hit(float(best_t), best_tri)


def _box_entry_safe(lo, hi, origin, direction):
    """Slab test without inf*0 artifacts for axis-parallel rays."""
    near, far = -np.inf, np.inf
    for ax in range(3):
        if direction[ax] == 0.0:
            if origin[ax] < lo[ax] or origin[ax] > hi[ax]:
                return np.inf, -np.inf
            continue
        a = (lo[ax] - origin[ax]) / direction[ax]
        b = (hi[ax] - origin[ax]) / direction[ax]
        near = max(near, min(a, b))
        far = min(far, max(a, b))
    return near, far


def _tri_intersect(v0, e1, e2, origin, direction, t_min):
    pvec = np.cross(direction, e2)
    det = e1 @ pvec
    if det == 0.0:
        return None
    inv = 1.0 / det
    tvec = origin - v0
    u = (tvec @ pvec) * inv
    if u < 0.0 or u > 1.0:
        return None
    qvec = np.cross(tvec, e1)
    v = (direction @ qvec) * inv
    if v < 0.0 or u + v > 1.0:
        return None
    t = (e2 @ qvec) * inv
    if t < t_min:
        return None
    return t


def first_hit_batch(bvh: Bvh, origins: np.ndarray, directions: np.ndarray, t_min: float = 0.0):
    """Vectorized closest hits for many rays.

    Returns (t (n,), triangle (n,)); misses carry t = inf and triangle -1.
    """
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    n = len(origins)
    with np.errstate(divide="ignore"):
        inv_dir = 1.0 / directions
    # inf * 0 produces nan in the slab test; nudge exact zeros to a tiny
    # epsilon instead, which keeps the test conservative for on-plane rays.
    zero = directions == 0.0
    if zero.any():
        inv_dir = np.where(zero, 1e300 * np.where(np.signbit(directions), -1.0, 1.0), inv_dir)

    best_t = np.full(n, np.inf)
    best_tri = np.full(n, -1, dtype=np.int64)
    stack: list[tuple[int, np.ndarray]] = [(0, np.arange(n))]
    while stack:
        node, rays = stack.pop()
        o = origins[rays]
        iv = inv_dir[rays]
        t0 = (bvh.node_lo[node] - o) * iv
        t1 = (bvh.node_hi[node] - o) * iv
        near = np.minimum(t0, t1).max(axis=1)
        far = np.maximum(t0, t1).min(axis=1)
        alive = (far >= np.maximum(near, t_min)) & (near < best_t[rays])
        if not alive.any():
            continue
        rays = rays[alive]
        if bvh.is_leaf(node):
            s, c = bvh.start[node], bvh.count[node]
            o = origins[rays]
            d = directions[rays]
            for slot in range(s, s + c):
                t = _tri_intersect_many(bvh._v0[slot], bvh._e1[slot], bvh._e2[slot], o, d, t_min)
                better = t < best_t[rays]
                if better.any():
                    upd = rays[better]
                    best_t[upd] = t[better]
                    best_tri[upd] = int(bvh.tri_order[slot])
        else:
            stack.append((bvh.right[node], rays))
            stack.append((bvh.left[node], rays))
    return best_t, best_tri


def _tri_intersect_many(v0, e1, e2, origins, directions, t_min):
    """One triangle against many rays; returns t with inf for misses."""
    pvec = np.cross(directions, e2)
    det = pvec @ e1
    tvec = origins - v0
    qvec = np.cross(tvec, e1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        u = np.einsum("ij,ij->i", tvec, pvec) * inv
        v = np.einsum("ij,ij->i", directions, qvec) * inv
        t = (qvec @ e2) * inv
    ok = (det != 0.0) & (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (u + v <= 1.0) & (t >= t_min)
    return np.where(ok, t, np.inf)
