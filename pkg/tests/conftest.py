"""Shared fixtures. Session-scoped bakes keep the suite fast on one core."""

import numpy as np
import pytest

from plenocache.cache import bake
from plenocache.camera import Camera, orbit_to_matrix
from plenocache.factorizer import sample_reference
from plenocache.scenes import scene_by_id


@pytest.fixture(scope="session")
def spec_sphere_grid():
    field = scene_by_id("spec-sphere")
    return sample_reference(field, field.default_aabb, 12, 40)


@pytest.fixture(scope="session")
def lambert_cache():
    field = scene_by_id("lambert-sphere")
    return bake(field, field.default_aabb, 48, dir_mode="cube", l=16)


@pytest.fixture(scope="session")
def lambert_field():
    return scene_by_id("lambert-sphere")


@pytest.fixture
def small_camera():
    return Camera(orbit_to_matrix(0.6, 0.25, 1.6), fov=0.7, width=48, height=48)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
