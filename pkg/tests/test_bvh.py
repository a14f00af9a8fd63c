"""BVH correctness against exhaustive ray-triangle intersection.

first_hit must agree with a brute-force scan over every triangle: same t to
1e-9, and on exact ties the same winner the scan picks. The batch traversal
must then agree with the scalar one ray by ray.
"""

import numpy as np
import pytest

from plenocache.bvh import Bvh, EmptyGate, build_bvh, first_hit, first_hit_batch
from plenocache.errors import EmptyMesh
from plenocache.mesher import CollisionMesh, marching_cubes, mesh_from_cache
from plenocache.geometry import Aabb
from plenocache.mesher import DensityVolume


def brute_force_hit(mesh, origin, direction, t_min=0.0):
    """Reference Moller-Trumbore over all triangles; first (t, idx) or None."""
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    e1 = mesh.vertices[mesh.triangles[:, 1]] - v0
    e2 = mesh.vertices[mesh.triangles[:, 2]] - v0
    best_t, best_i = np.inf, -1
    for i in range(len(v0)):
        p = np.cross(direction, e2[i])
        det = float(np.dot(e1[i], p))
        if det == 0.0:
            continue
        inv = 1.0 / det
        s = origin - v0[i]
        u = float(np.dot(s, p)) * inv
        if u < 0.0 or u > 1.0:
            continue
        q = np.cross(s, e1[i])
        v = float(np.dot(direction, q)) * inv
        if v < 0.0 or u + v > 1.0:
            continue
        t = float(np.dot(e2[i], q)) * inv
        if t >= t_min and t < best_t:
            best_t, best_i = t, i
    return None if best_i < 0 else (best_t, best_i)


@pytest.fixture(scope="module")
def sphere_mesh():
    n = 20
    g = (np.arange(n) + 0.5) / n - 0.5
    x, y, z = np.meshgrid(g, g, g, indexing="ij")
    f = 0.35 - np.sqrt(x * x + y * y + z * z)
    return marching_cubes(DensityVolume(f, Aabb((-0.5,) * 3, (0.5,) * 3)))


@pytest.fixture(scope="module")
def sphere_bvh(sphere_mesh):
    return build_bvh(sphere_mesh)


def random_rays(n, seed):
    rng = np.random.default_rng(seed)
    origins = rng.uniform(-1.2, 1.2, (n, 3))
    targets = rng.uniform(-0.3, 0.3, (n, 3))
    dirs = targets - origins
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return origins, dirs


class TestFirstHit:
    def test_matches_brute_force(self, sphere_mesh, sphere_bvh):
        origins, dirs = random_rays(300, seed=1)
        for i in range(len(origins)):
            got = first_hit(sphere_bvh, origins[i], dirs[i])
            want = brute_force_hit(sphere_mesh, origins[i], dirs[i])
            if want is None:
                assert got is None
            else:
                assert got is not None
                assert got.t == pytest.approx(want[0], abs=1e-9)
                if abs(got.t - want[0]) == 0.0:
                    assert got.triangle == want[1]

    def test_miss_rays(self, sphere_bvh):
        assert first_hit(sphere_bvh, np.array([2.0, 2.0, 2.0]), np.array([0.0, 0.0, 1.0])) is None

    def test_t_min_skips_near_surface(self, sphere_mesh, sphere_bvh):
        origin = np.array([0.0, 0.0, -2.0])
        direction = np.array([0.0, 0.0, 1.0])
        front = first_hit(sphere_bvh, origin, direction)
        back = first_hit(sphere_bvh, origin, direction, t_min=front.t + 1e-6)
        assert back is not None and back.t > front.t
        want = brute_force_hit(sphere_mesh, origin, direction, t_min=front.t + 1e-6)
        assert back.t == pytest.approx(want[0], abs=1e-9)

    def test_axis_parallel_rays(self, sphere_mesh, sphere_bvh):
        # zero direction components exercise the slab-test edge cases
        for axis in range(3):
            d = np.zeros(3)
            d[axis] = 1.0
            o = np.array([-0.01, 0.02, -0.01])
            o[axis] = -2.0
            got = first_hit(sphere_bvh, o, d)
            want = brute_force_hit(sphere_mesh, o, d)
            assert got is not None and want is not None
            assert got.t == pytest.approx(want[0], abs=1e-9)

    def test_traversal_prunes(self, sphere_mesh, sphere_bvh):
        stats = {}
        first_hit(sphere_bvh, np.array([0.0, 0.0, -2.0]), np.array([0.0, 0.0, 1.0]), stats=stats)
        assert 0 < stats["tri_tests"] < len(sphere_mesh.triangles) // 4


class TestFirstHitBatch:
    def test_matches_scalar(self, sphere_bvh):
        origins, dirs = random_rays(500, seed=2)
        ts, tris = first_hit_batch(sphere_bvh, origins, dirs)
        for i in range(len(origins)):
            got = first_hit(sphere_bvh, origins[i], dirs[i])
            if got is None:
                assert np.isinf(ts[i]) and tris[i] == -1
            else:
                # einsum and np.dot sum in different orders; ulp-level slack
                assert ts[i] == pytest.approx(got.t, rel=1e-12)
                assert tris[i] == got.triangle

    def test_t_min_respected(self, sphere_bvh):
        origins = np.tile([[0.0, 0.0, -2.0]], (2, 1))
        dirs = np.tile([[0.0, 0.0, 1.0]], (2, 1))
        t0, _ = first_hit_batch(sphere_bvh, origins[:1], dirs[:1])
        ts, _ = first_hit_batch(sphere_bvh, origins, dirs, t_min=float(t0[0]) + 1e-6)
        assert np.all(ts > t0[0])

    def test_zero_direction_component(self, sphere_bvh):
        origins = np.array([[0.0, 0.0, -2.0], [0.0, -2.0, 0.01]])
        dirs = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
        ts, tris = first_hit_batch(sphere_bvh, origins, dirs)
        assert np.all(np.isfinite(ts)) and np.all(tris >= 0)


class TestBuild:
    def test_leaves_cover_all_triangles(self, sphere_mesh, sphere_bvh):
        seen = np.zeros(len(sphere_mesh.triangles), dtype=bool)
        for node in range(len(sphere_bvh.left)):
            if sphere_bvh.left[node] < 0:
                s, c = sphere_bvh.start[node], sphere_bvh.count[node]
                seen[sphere_bvh.tri_order[s : s + c]] = True
                assert c <= 4
        assert np.all(seen)

    def test_child_boxes_inside_parent(self, sphere_bvh):
        for node in range(len(sphere_bvh.left)):
            l, r = sphere_bvh.left[node], sphere_bvh.right[node]
            if l >= 0:
                for child in (l, r):
                    assert np.all(sphere_bvh.node_lo[child] >= sphere_bvh.node_lo[node] - 1e-12)
                    assert np.all(sphere_bvh.node_hi[child] <= sphere_bvh.node_hi[node] + 1e-12)

    def test_empty_mesh_rejected(self):
        empty = CollisionMesh(
            vertices=np.zeros((0, 3)), triangles=np.zeros((0, 3), dtype=np.int64), threshold=0.0
        )
        with pytest.raises(EmptyMesh):
            build_bvh(empty)

    def test_single_triangle(self):
        mesh = CollisionMesh(
            vertices=np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]),
            triangles=np.array([[0, 1, 2]]),
            threshold=0.0,
        )
        bvh = build_bvh(mesh)
        hit = first_hit(bvh, np.array([0.2, 0.2, 1.0]), np.array([0.0, 0.0, -1.0]))
        assert hit is not None and hit.t == pytest.approx(1.0)


class TestEmptyGate:
    def test_scalar_and_batch_miss_everything(self):
        g = EmptyGate()
        assert g.first_hit(np.zeros(3), np.array([0.0, 0.0, 1.0])) is None
        ts, tris = g.first_hit_batch(np.zeros((5, 3)), np.tile([[0.0, 0.0, 1.0]], (5, 1)))
        assert np.all(np.isinf(ts)) and np.all(tris == -1)
