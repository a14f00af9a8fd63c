"""plenocache: factorized radiance fields with baked sparse caches.

A radiance field is split into a position half (density plus D color
components per point) and a direction half (D weights per view direction);
their inner product gives view-dependent color. Both halves are baked into
lookup tables - a sparse voxel cache and a dense direction grid - so
rendering is memory-bound instead of network-bound. A collision mesh plus
BVH skips empty space along rays.
"""

from .bvh import Bvh, EmptyGate, Hit, build_bvh, first_hit, first_hit_batch
from .cache import (
    CacheSizeReport,
    DirectionCache,
    PositionCache,
    bake,
    estimate_sizes,
    load_cache,
    save_cache,
)
from .camera import Camera, Ray, generate_ray, generate_rays, orbit_to_matrix, serialize_matrix
from .dataset import DatasetManifest, load_manifest, save_manifest
from .encoding import encode, encode_batch
from .errors import (
    CameraWarning,
    DegenerateAabb,
    DimensionMismatch,
    EmptyMesh,
    EngineError,
    InvalidSparsity,
    MissingField,
    NonUnitDirection,
    OutOfImage,
    ParseError,
    RankDeficiencyWarning,
    SizeGuardExceeded,
    TooSmall,
    UninitializedField,
    VersionMismatch,
)
from .factorizer import (
    FactorTables,
    SampleGrid,
    fit_als,
    fit_svd_oracle,
    jacobi_svd,
    sample_reference,
    tables_to_field,
)
from .fields import DeepRadianceMap, FactorizedField, combine, combine_batch
from .geometry import Aabb, fibonacci_sphere
from .images import load_pfm, load_png, save_pfm, save_png
from .mesher import (
    CollisionMesh,
    DensityVolume,
    downsample,
    marching_cubes,
    mesh_from_cache,
    to_occupancy,
)
from .mlp import MlpField, MlpWeights, load_weights, random_weights, save_weights
from .renderer import (
    FrameBuffer,
    RenderConfig,
    bench,
    gate_for_cache,
    integrate_ray,
    psnr,
    render,
    sources_for_field,
)
from .scenes import analytic_catalog, scene_by_id
from .config import EngineConfig, load_config, save_config

__version__ = "0.1.0"
