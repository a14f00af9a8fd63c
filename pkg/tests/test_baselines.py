"""Render-quality regression guard against frozen PSNR measurements.

The tolerances absorb BLAS and platform drift, nothing more; a real quality
regression moves these numbers by whole decibels.
"""

import json
from pathlib import Path

import pytest

from plenocache.cache import bake
from plenocache.camera import Camera, orbit_to_matrix
from plenocache.renderer import psnr, render, sources_for_cache, sources_for_field
from plenocache.scenes import scene_by_id

BASELINES = json.loads((Path(__file__).parent / "baselines.json").read_text())


def baseline_camera(resolution):
    p = BASELINES["pose"]
    m = orbit_to_matrix(p["azimuth"], p["elevation"], p["distance"])
    return Camera(m, p["fov"], resolution, resolution)


def test_lambert_sphere_cached_vs_fine_direct():
    b = BASELINES["lambert_sphere"]
    field = scene_by_id("lambert-sphere")
    pos, dirs = bake(field, field.default_aabb, b["cached_k"], l=b["l"])
    cam = baseline_camera(b["resolution"])
    cached = render(cam, *sources_for_cache(pos, dirs))
    direct = render(cam, *sources_for_field(field, field.default_aabb, b["direct_k"]))
    assert psnr(cached.color, direct.color) == pytest.approx(b["psnr_db"], abs=0.05)


def test_spec_sphere_coarsest_grid_point():
    b = BASELINES["spec_sphere_trend"]
    field = scene_by_id("spec-sphere")
    pos, dirs = bake(field, field.default_aabb, 64, l=b["l"])
    cam = baseline_camera(b["resolution"])
    cached = render(cam, *sources_for_cache(pos, dirs))
    direct = render(cam, *sources_for_field(field, field.default_aabb, 64))
    assert psnr(cached.color, direct.color) == pytest.approx(b["psnr_db"]["64"], abs=0.05)
