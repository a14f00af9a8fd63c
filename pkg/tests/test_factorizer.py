"""Low-rank fitting: the in-repo Jacobi SVD oracle, ALS against it, invariants.

jacobi_svd is the independent reference for everything else here, so it gets
checked first against constructions whose decompositions are known in closed
form; only then is fit_als held to it.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plenocache.errors import RankDeficiencyWarning
from plenocache.factorizer import (
    fit_als,
    fit_svd_oracle,
    jacobi_svd,
    load_tables,
    sample_reference,
    save_tables,
    tables_to_field,
)
from plenocache.scenes import scene_by_id


def random_grid(p_axis, q, d_true, seed):
    """Grid whose radiance is exactly rank d_true by construction."""
    rng = np.random.default_rng(seed)
    field = scene_by_id("spec-sphere")
    grid = sample_reference(field, field.default_aabb, p_axis, q)
    u = rng.standard_normal((3 * grid.p, d_true))
    b = rng.standard_normal((q, d_true))
    radiance = (u @ b.T).reshape(grid.p, 3, q).transpose(0, 2, 1)
    return type(grid)(
        positions=grid.positions,
        directions=grid.directions,
        radiance=radiance,
        density=grid.density,
    )


class TestJacobiSvd:
    def test_diagonal_matrix_exact(self):
        a = np.diag([5.0, 3.0, 1.0])
        u, s, vt = jacobi_svd(a)
        np.testing.assert_allclose(s, [5.0, 3.0, 1.0], atol=1e-14)
        np.testing.assert_allclose(u @ np.diag(s) @ vt, a, atol=1e-13)

    def test_reconstruction_and_orthogonality(self, rng):
        a = rng.standard_normal((30, 12))
        u, s, vt = jacobi_svd(a)
        np.testing.assert_allclose(u @ np.diag(s) @ vt, a, atol=1e-10)
        np.testing.assert_allclose(u.T @ u, np.eye(12), atol=1e-10)
        np.testing.assert_allclose(vt @ vt.T, np.eye(12), atol=1e-10)
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)

    def test_known_rank_two(self, rng):
        x = rng.standard_normal((40, 2))
        y = rng.standard_normal((2, 15))
        _, s, _ = jacobi_svd(x @ y)
        assert s[1] > 1e-6
        np.testing.assert_allclose(s[2:], 0.0, atol=1e-10)

    def test_rotation_invariance_of_spectrum(self, rng):
        a = rng.standard_normal((10, 10))
        q, _ = np.linalg.qr(rng.standard_normal((10, 10)))
        _, s1, _ = jacobi_svd(a)
        _, s2, _ = jacobi_svd(q @ a)
        np.testing.assert_allclose(s1, s2, atol=1e-10)


class TestSvdOracle:
    def test_residual_equals_discarded_spectrum(self, spec_sphere_grid):
        m = spec_sphere_grid.matrix()
        _, s, _ = jacobi_svd(m)
        for d in (1, 2, 3):
            tables = fit_svd_oracle(spec_sphere_grid, d)
            tail = float(np.sqrt(np.sum(s[d:] ** 2)))
            assert tables.residual == pytest.approx(tail, rel=1e-8, abs=1e-12)

    def test_factor_shapes(self, spec_sphere_grid):
        t = fit_svd_oracle(spec_sphere_grid, 2)
        assert t.pos_factors.shape == (spec_sphere_grid.p, 2, 3)
        assert t.dir_factors.shape == (spec_sphere_grid.q, 2)

    def test_reconstruction_residual_is_frobenius_gap(self, spec_sphere_grid):
        t = fit_svd_oracle(spec_sphere_grid, 2)
        m = spec_sphere_grid.matrix()
        u = t.pos_factors.transpose(0, 2, 1).reshape(m.shape[0], 2)
        gap = np.linalg.norm(m - u @ t.dir_factors.T)
        assert t.residual == pytest.approx(gap, rel=1e-10)


class TestFitAls:
    def test_spec_sphere_rank_two(self, spec_sphere_grid):
        t2 = fit_als(spec_sphere_grid, 2, iters=100, seed=0)
        t1 = fit_als(spec_sphere_grid, 1, iters=100, seed=0)
        assert t2.residual < 1e-6
        assert t1.residual > t2.residual * 100

    def test_separable_field_rank_one(self):
        # radiance u(p) * b(q) fits exactly at d=1
        g = random_grid(8, 24, 1, seed=5)
        t = fit_als(g, 1, iters=80, seed=0)
        assert t.residual < 1e-8

    def test_random_rank_three(self):
        g = random_grid(7, 30, 3, seed=6)
        t = fit_als(g, 3, iters=200, seed=0)
        assert t.residual < 1e-6

    def test_matches_truncation_optimum_on_dense_grid(self, spec_sphere_grid, rng):
        g = random_grid(6, 25, 25, seed=7)  # effectively full-rank radiance
        t = fit_als(g, 2, iters=300, seed=0)
        oracle = fit_svd_oracle(g, 2)
        assert t.residual <= oracle.residual + 1e-4

    def test_residual_monotone_in_iterations(self, spec_sphere_grid):
        # deterministic seeding makes shorter runs prefixes of longer ones
        res = [
            fit_als(spec_sphere_grid, 2, iters=i, seed=3).residual
            for i in (1, 2, 4, 8, 16, 32)
        ]
        for a, b in zip(res, res[1:]):
            assert b <= a + 1e-9

    def test_residual_non_increasing_in_d(self, spec_sphere_grid):
        g = random_grid(6, 20, 4, seed=8)
        res = [fit_als(g, d, iters=60, seed=0).residual for d in (1, 2, 3, 4)]
        for a, b in zip(res, res[1:]):
            assert b <= a + 1e-9

    def test_gauge_freedom(self, spec_sphere_grid):
        t = fit_als(spec_sphere_grid, 2, iters=50, seed=0)
        scale = np.array([3.0, 0.25])
        u = t.pos_factors * scale[None, :, None]
        b = t.dir_factors / scale[None, :]
        orig = np.einsum("pdc,qd->pqc", t.pos_factors, t.dir_factors)
        scaled = np.einsum("pdc,qd->pqc", u, b)
        np.testing.assert_allclose(scaled, orig, atol=1e-9)

    def test_permutation_symmetry(self, spec_sphere_grid):
        t = fit_als(spec_sphere_grid, 3, iters=40, seed=0)
        perm = np.array([2, 0, 1])
        orig = np.einsum("pdc,qd->pqc", t.pos_factors, t.dir_factors)
        permuted = np.einsum("pdc,qd->pqc", t.pos_factors[:, perm], t.dir_factors[:, perm])
        np.testing.assert_allclose(permuted, orig, atol=1e-12)

    def test_deterministic_for_seed(self, spec_sphere_grid):
        a = fit_als(spec_sphere_grid, 2, iters=30, seed=11)
        b = fit_als(spec_sphere_grid, 2, iters=30, seed=11)
        np.testing.assert_array_equal(a.pos_factors, b.pos_factors)
        np.testing.assert_array_equal(a.dir_factors, b.dir_factors)
        assert a.residual == b.residual

    def test_overcomplete_fit_warns_but_converges(self, spec_sphere_grid):
        # d above the true rank leaves the normal equations singular
        with pytest.warns(RankDeficiencyWarning):
            t = fit_als(spec_sphere_grid, 5, iters=40, seed=0)
        assert np.isfinite(t.residual)
        assert t.residual < 1e-6

    def test_bad_arguments(self, spec_sphere_grid):
        with pytest.raises(ValueError):
            fit_als(spec_sphere_grid, 0)
        with pytest.raises(ValueError):
            fit_als(spec_sphere_grid, 2, iters=0)


@settings(max_examples=20, deadline=None)
@given(
    p_axis=st.integers(min_value=2, max_value=5),
    q=st.integers(min_value=4, max_value=24),
    d_true=st.integers(min_value=1, max_value=3),
    seed=st.integers(min_value=0, max_value=10_000),
)
def test_als_never_beats_oracle_property(p_axis, q, d_true, seed):
    """For any grid, ALS residual stays within tolerance of the SVD optimum
    and exactly-rank-d grids fit to numerical zero."""
    g = random_grid(p_axis, q, d_true, seed)
    d_fit = min(d_true, q, 3 * p_axis**3)
    t = fit_als(g, d_fit, iters=150, seed=1)
    oracle = fit_svd_oracle(g, d_fit)
    assert t.residual <= oracle.residual + 1e-4
    assert t.residual >= oracle.residual - 1e-7  # oracle is optimal


class TestTablesIo:
    def test_round_trip(self, spec_sphere_grid, tmp_path):
        t = fit_als(spec_sphere_grid, 2, iters=50, seed=0)
        path = tmp_path / "t.plt"
        save_tables(t, path)
        t2 = load_tables(path)
        np.testing.assert_array_equal(t.pos_factors, t2.pos_factors)
        np.testing.assert_array_equal(t.dir_factors, t2.dir_factors)
        assert t.residual == t2.residual

    def test_tables_field_reproduces_grid(self, spec_sphere_grid):
        t = fit_svd_oracle(spec_sphere_grid, 2)
        field = tables_to_field(t, spec_sphere_grid)
        sigma, comps = field.eval_pos_batch(spec_sphere_grid.positions)
        betas = field.eval_dir_batch(spec_sphere_grid.directions)
        recon = np.einsum("qd,pdc->pqc", betas, comps)
        err = np.linalg.norm(recon - spec_sphere_grid.radiance)
        assert err <= t.residual + 1e-9
        np.testing.assert_array_equal(sigma, spec_sphere_grid.density)
