"""Engine configuration: one JSON document describing a reproducible run.

Schema (version 1):

    {
      "schema_version": 1,
      "scene": {"analytic": {"id": "lambert-sphere", ...overrides}}
               | {"weights": "path/to/weights.bin"}
               | {"cache": "path/to/cache.bin"},
      "aabb": {"lo": [x,y,z], "hi": [x,y,z]},        # optional for analytic
      "bake": {"k": 64, "l": 64, "dir_mode": "cube", "density_threshold": 0.0},
      "render": {"step": null, "eps_t": 0.001, "background": [1,1,1],
                 "max_samples": 4096, "workers": 1},
      "serve": {"host": "127.0.0.1", "port": 8765, "assets_dir": null}
    }

Exactly one scene source must be present. Unknown keys are rejected so
typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import MissingField, ParseError
from .geometry import Aabb
from .renderer import RenderConfig

SCHEMA_VERSION = 1
SCENE_SOURCES = ("analytic", "weights", "cache")


@dataclass(frozen=True)
class BakeParams:
    k: int = 64
    l: int = 64
    dir_mode: str = "cube"
    density_threshold: float = 0.0

    def __post_init__(self):
        if self.k < 1 or self.l < 1:
            raise ParseError(f"bake k and l must be >= 1, got k={self.k} l={self.l}")
        if self.dir_mode not in ("cube", "equirect"):
            raise ParseError(f"dir_mode must be cube or equirect, got {self.dir_mode!r}")
        if self.density_threshold < 0:
            raise ParseError(f"density_threshold must be >= 0, got {self.density_threshold}")


@dataclass(frozen=True)
class ServeParams:
    host: str = "127.0.0.1"
    port: int = 8765
    assets_dir: str | None = None

    def __post_init__(self):
        if not 0 <= self.port <= 65535:
            raise ParseError(f"port out of range: {self.port}")


@dataclass(frozen=True)
class EngineConfig:
    scene: dict
    aabb: Aabb | None = None
    bake: BakeParams = field(default_factory=BakeParams)
    render: RenderConfig = field(default_factory=RenderConfig)
    serve: ServeParams = field(default_factory=ServeParams)

    def __post_init__(self):
        sources = [k for k in SCENE_SOURCES if k in self.scene]
        if len(sources) != 1:
            raise ParseError(
                f"scene must name exactly one of {SCENE_SOURCES}, got {sorted(self.scene)}"
            )

    @property
    def source_kind(self) -> str:
        return next(k for k in SCENE_SOURCES if k in self.scene)


def _section(raw: dict, name: str, cls, path: str):
    data = raw.get(name, {})
    if not isinstance(data, dict):
        raise ParseError(f"{path}: '{name}' must be an object")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ParseError(f"{path}: unknown {name} keys {sorted(unknown)} (allowed: {sorted(allowed)})")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ParseError(f"{path}: bad '{name}' section: {e}") from e


def load_config(path) -> EngineConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    except OSError as e:
        raise ParseError(f"{path}: {e}") from e
    return config_from_dict(raw, str(path))


def config_from_dict(raw: dict, path: str = "<config>") -> EngineConfig:
    version = raw.get("schema_version")
    if version is None:
        raise MissingField(f"{path}: missing 'schema_version'")
    if version != SCHEMA_VERSION:
        raise ParseError(f"{path}: schema_version {version} unsupported (expected {SCHEMA_VERSION})")
    if "scene" not in raw:
        raise MissingField(f"{path}: missing 'scene'")

    known = {"schema_version", "scene", "aabb", "bake", "render", "serve"}
    unknown = set(raw) - known
    if unknown:
        raise ParseError(f"{path}: unknown top-level keys {sorted(unknown)}")

    aabb = None
    if raw.get("aabb") is not None:
        box = raw["aabb"]
        if not isinstance(box, dict) or "lo" not in box or "hi" not in box:
            raise ParseError(f"{path}: aabb needs 'lo' and 'hi'")
        aabb = Aabb(box["lo"], box["hi"])

    # Render section maps straight onto RenderConfig except the background,
    # which JSON carries as a list.
    rsec = dict(raw.get("render", {}))
    if "background" in rsec:
        bg = rsec["background"]
        if not (isinstance(bg, list) and len(bg) == 3):
            raise ParseError(f"{path}: render.background must be a 3-element list")
        rsec["background"] = tuple(float(v) for v in bg)
    render = _section({"render": rsec}, "render", RenderConfig, path)

    return EngineConfig(
        scene=raw["scene"],
        aabb=aabb,
        bake=_section(raw, "bake", BakeParams, path),
        render=render,
        serve=_section(raw, "serve", ServeParams, path),
    )


def save_config(cfg: EngineConfig, path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scene": cfg.scene,
        "aabb": None
        if cfg.aabb is None
        else {"lo": list(cfg.aabb.lo), "hi": list(cfg.aabb.hi)},
        "bake": dict(cfg.bake.__dict__),
        "render": {**cfg.render.__dict__, "background": list(cfg.render.background)},
        "serve": dict(cfg.serve.__dict__),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def resolve_field(cfg: EngineConfig):
    """Field and AABB from an analytic or weights scene source.

    Cache sources are loaded directly by callers (no field to evaluate).
    """
    from .mlp import MlpField, load_weights
    from .scenes import scene_by_id

    kind = cfg.source_kind
    if kind == "analytic":
        spec = dict(cfg.scene["analytic"])
        scene_id = spec.pop("id", None)
        if scene_id is None:
            raise MissingField("scene.analytic needs an 'id'")
        scene = scene_by_id(scene_id, **spec)
        return scene, cfg.aabb or scene.default_aabb
    if kind == "weights":
        weights = load_weights(cfg.scene["weights"])
        if cfg.aabb is None:
            raise MissingField("weights scenes need an explicit 'aabb'")
        return MlpField(weights), cfg.aabb
    raise ParseError(f"scene source {kind!r} has no field form")
