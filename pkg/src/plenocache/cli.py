"""Command line interface.

Subcommands map onto the library one-to-one: fit (factorize a sampled
radiance grid), bake (tabulate caches), mesh (collision mesh from a cache),
render (one frame to PNG/PFM), bench (cached vs direct timing), estimate
(cache memory model), serve (interactive frame-streaming service).

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import cache as cache_mod
from . import factorizer, mesher, renderer, scenes, server
from .camera import Camera, orbit_to_matrix
from .config import BakeParams, load_config, resolve_field
from .dataset import load_manifest
from .errors import EngineError
from .geometry import Aabb
from .images import save_pfm, save_png
from .mlp import MlpField, load_weights
from .renderer import RenderConfig


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the CLI contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str, n: int, what: str) -> tuple:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != n:
        raise ValueError(f"{what} needs {n} comma-separated numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _add_source_flags(p: _Parser, cache_ok: bool = False):
    g = p.add_argument_group("scene source (exactly one)")
    g.add_argument("--config", metavar="PATH", help="engine config file (overrides inline flags)")
    g.add_argument("--scene", metavar="ID", help="analytic catalog scene id")
    g.add_argument("--weights", metavar="PATH", help="MLP weights container")
    if cache_ok:
        g.add_argument("--cache", metavar="PATH", help="baked cache container")
    p.add_argument("--aabb", metavar="X0,Y0,Z0,X1,Y1,Z1", help="scene bounds")


def _add_camera_flags(p: _Parser):
    g = p.add_argument_group("camera")
    g.add_argument("--orbit", metavar="AZ,EL,DIST", default="0.0,0.0,2.0")
    g.add_argument("--target", metavar="X,Y,Z", default="0,0,0")
    g.add_argument("--fov", type=float, default=0.7, help="horizontal fov, radians")
    g.add_argument("--width", type=int, default=128)
    g.add_argument("--height", type=int, default=128)
    g.add_argument("--manifest", metavar="PATH", help="transforms.json with camera poses")
    g.add_argument("--frame", type=int, default=0, help="manifest frame index")


def _resolve_field(args, parser: _Parser, require: bool = True):
    """(field, aabb) from --config/--scene/--weights; None when absent and
    not required."""
    sources = [s for s in ("scene", "weights") if getattr(args, s, None)]
    if args.config:
        if sources or getattr(args, "cache", None):
            parser.error("--config conflicts with --scene/--weights/--cache")
        cfg = load_config(args.config)
        if cfg.source_kind == "cache":
            return None, None
        return resolve_field(cfg)
    if getattr(args, "cache", None):
        if sources:
            parser.error("--cache conflicts with --scene/--weights")
        return None, None
    if len(sources) > 1:
        parser.error("--scene and --weights are mutually exclusive")
    if not sources:
        if require:
            parser.error("a scene source is required (--scene, --weights, --cache, or --config)")
        return None, None
    aabb = Aabb(*np.asarray(_floats(args.aabb, 6, "--aabb")).reshape(2, 3)) if args.aabb else None
    if args.scene:
        field = scenes.scene_by_id(args.scene)
        return field, aabb or field.default_aabb
    field = MlpField(load_weights(args.weights))
    if aabb is None:
        parser.error("--weights needs an explicit --aabb")
    return field, aabb


def _bake_params(args) -> BakeParams:
    if args.config:
        return load_config(args.config).bake
    return BakeParams(args.k, args.l, args.dir_mode, args.threshold)


def _camera(args, parser: _Parser) -> Camera:
    if args.manifest:
        manifest = load_manifest(args.manifest)
        if not 0 <= args.frame < len(manifest.frames):
            parser.error(f"--frame {args.frame} out of range (manifest has {len(manifest.frames)})")
        m = manifest.frames[args.frame].transform
        return Camera(m, manifest.camera_angle_x, args.width, args.height)
    az, el, dist = _floats(args.orbit, 3, "--orbit")
    target = _floats(args.target, 3, "--target")
    return Camera(orbit_to_matrix(az, el, dist, target), args.fov, args.width, args.height)


def _render_config(args) -> RenderConfig:
    if getattr(args, "config", None):
        return load_config(args.config).render
    kwargs = {}
    if getattr(args, "step", None) is not None:
        kwargs["step"] = args.step
    if getattr(args, "eps_t", None) is not None:
        kwargs["eps_t"] = args.eps_t
    if getattr(args, "background", None):
        kwargs["background"] = _floats(args.background, 3, "--background")
    if getattr(args, "workers", None):
        kwargs["workers"] = args.workers
    return RenderConfig(**kwargs)


def _require_field(pair, parser):
    if pair[0] is None:
        parser.error("this command needs an analytic or weights scene source")
    return pair


def cmd_fit(args, parser):
    field, aabb = _require_field(_resolve_field(args, parser), parser)
    p_spec = tuple(int(v) for v in args.p.split(",")) if "," in args.p else int(args.p)
    grid = factorizer.sample_reference(field, aabb, p_spec, args.q)
    tables = factorizer.fit_als(grid, args.d, iters=args.iters, seed=args.seed)
    if args.out:
        factorizer.save_tables(tables, args.out)
    rms = tables.residual / np.sqrt(grid.p * 3 * grid.q)
    print(f"fit d={args.d} on {grid.p}x{grid.q} samples: residual {tables.residual:.6g} (rms {rms:.3g})")
    if args.out:
        print(f"wrote {args.out}")
    return 0


def cmd_bake(args, parser):
    field, aabb = _require_field(_resolve_field(args, parser), parser)
    bp = _bake_params(args)
    pos, dir_cache = cache_mod.bake(
        field, aabb, bp.k, dir_mode=bp.dir_mode, l=bp.l, density_threshold=bp.density_threshold
    )
    cache_mod.save_cache(pos, dir_cache, args.out)
    print(
        f"baked k={bp.k} grid {pos.dims[0]}x{pos.dims[1]}x{pos.dims[2]}: "
        f"{pos.n_occupied} occupied voxels (alpha {pos.alpha:.4f}), "
        f"direction {bp.dir_mode} l={dir_cache.l}"
    )
    print(f"wrote {args.out}")
    return 0


def cmd_mesh(args, parser):
    pos, _ = cache_mod.load_cache(args.cache)
    mesh = mesher.mesh_from_cache(pos, args.threshold, args.max_dims)
    if args.out.endswith(".obj"):
        mesher.export_obj(mesh, args.out)
    elif args.out.endswith(".stl"):
        mesher.export_stl(mesh, args.out)
    else:
        parser.error("--out must end in .stl or .obj")
    print(f"extracted {mesh.n_triangles} triangles over {len(mesh.vertices)} vertices")
    print(f"wrote {args.out}")
    return 0


def cmd_render(args, parser):
    field, aabb = _resolve_field(args, parser)
    cache_path = args.cache
    if args.config and field is None:
        cache_path = load_config(args.config).scene["cache"]
    cfg = _render_config(args)
    camera = _camera(args, parser)
    if cache_path:
        pos, dir_cache = cache_mod.load_cache(cache_path)
        gate = None if args.no_gate else renderer.gate_for_cache(pos)
        fb = renderer.render(camera, pos, dir_cache, gate, cfg)
    else:
        pos_src, dir_src = renderer.sources_for_field(field, aabb, args.k)
        fb = renderer.render(camera, pos_src, dir_src, None, cfg)
    save_png(args.out, fb.rgba8())
    if args.pfm:
        save_pfm(args.pfm, fb.color.astype(np.float32))
    print(f"wrote {args.out}" + (f" and {args.pfm}" if args.pfm else ""))
    return 0


def cmd_bench(args, parser):
    field, aabb = _require_field(_resolve_field(args, parser), parser)
    bp = _bake_params(args)
    pos, dir_cache = cache_mod.bake(
        field, aabb, bp.k, dir_mode=bp.dir_mode, l=bp.l, density_threshold=bp.density_threshold
    )
    direct_pos, direct_dir = renderer.sources_for_field(field, aabb, bp.k)
    camera = _camera(args, parser)
    resolutions = tuple(int(v) for v in args.res.split(","))
    report = renderer.bench(
        pos, dir_cache, direct_pos, direct_dir, camera,
        resolutions=resolutions, repetitions=args.reps, cfg=_render_config(args),
    )
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        for entry in report["resolutions"]:
            print(
                f"{entry['resolution']}x{entry['resolution']}: "
                f"cached {entry['cached_median_ms']:.1f} ms, "
                f"direct {entry['direct_median_ms']:.1f} ms, "
                f"speedup {entry['speedup']:.1f}x"
            )
    return 0


def cmd_estimate(args, parser):
    report = cache_mod.estimate_sizes(
        args.k, args.l, args.d, args.alpha,
        s_sigma=args.s_sigma, s_rgb=args.s_rgb, s_uvw=args.s_uvw, s_beta=args.s_beta,
    )
    if args.json:
        print(json.dumps(report.as_dict(), indent=2))
    else:
        print(f"baseline cache:   {report.m_nerf_bytes:,} bytes")
        print(
            f"factorized cache: {report.m_fastnerf_bytes:,} bytes "
            f"(position {report.m_fastnerf_pos_bytes:,} + direction {report.m_fastnerf_dir_bytes:,})"
        )
    return 0


def cmd_serve(args, parser):
    field, aabb = _resolve_field(args, parser)
    cache_path = args.cache
    serve_params = None
    if args.config:
        cfg = load_config(args.config)
        serve_params = cfg.serve
        if field is None:
            cache_path = cfg.scene["cache"]
    if cache_path:
        pos, dir_cache = cache_mod.load_cache(cache_path)
    else:
        bp = _bake_params(args)
        pos, dir_cache = cache_mod.bake(
            field, aabb, bp.k, dir_mode=bp.dir_mode, l=bp.l,
            density_threshold=bp.density_threshold,
        )
    gate = renderer.gate_for_cache(pos)
    service = server.RenderService(pos, dir_cache, gate, _render_config(args))
    host = args.host or (serve_params.host if serve_params else "127.0.0.1")
    port = args.port if args.port is not None else (serve_params.port if serve_params else 8765)
    assets = args.assets or (serve_params.assets_dir if serve_params else None)
    print(f"serving on ws://{host}:{port}/ws", flush=True)
    server.serve(service, host=host, port=port, assets_dir=assets)
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="plenocache", description="Factorized radiance cache renderer.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    f = sub.add_parser("fit", help="factorize a sampled radiance grid")
    _add_source_flags(f)
    f.add_argument("--p", default="16", help="position samples per axis (or total as NX,NY,NZ)")
    f.add_argument("--q", type=int, default=64, help="direction samples")
    f.add_argument("--d", type=int, default=8, help="components")
    f.add_argument("--iters", type=int, default=100)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", metavar="PATH", help="tables container output")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("bake", help="tabulate position and direction caches")
    _add_source_flags(b)
    b.add_argument("--k", type=int, default=64, help="voxels along the longest axis")
    b.add_argument("--l", type=int, default=64, help="direction bins per axis")
    b.add_argument("--dir-mode", choices=("cube", "equirect"), default="cube")
    b.add_argument("--threshold", type=float, default=0.0, help="occupancy density threshold")
    b.add_argument("--out", required=True, metavar="PATH")
    b.set_defaults(func=cmd_bake)

    m = sub.add_parser("mesh", help="collision mesh from a baked cache")
    m.add_argument("--cache", required=True, metavar="PATH")
    m.add_argument("--threshold", type=float, default=0.0)
    m.add_argument("--max-dims", type=int, default=512, help="downsample above this many voxels per axis")
    m.add_argument("--out", required=True, metavar="PATH", help=".stl or .obj")
    m.set_defaults(func=cmd_mesh)

    r = sub.add_parser("render", help="render one frame")
    _add_source_flags(r, cache_ok=True)
    _add_camera_flags(r)
    r.add_argument("--k", type=int, default=64, help="direct rendering: grid for the step size")
    r.add_argument("--step", type=float, help="march step (default: one voxel edge)")
    r.add_argument("--eps-t", type=float, dest="eps_t", help="early termination threshold")
    r.add_argument("--background", metavar="R,G,B")
    r.add_argument("--workers", type=int)
    r.add_argument("--no-gate", action="store_true", help="disable collision-mesh skipping")
    r.add_argument("--out", required=True, metavar="PATH.png")
    r.add_argument("--pfm", metavar="PATH.pfm", help="also write the linear float buffer")
    r.set_defaults(func=cmd_render)

    be = sub.add_parser("bench", help="cached vs direct render timing")
    _add_source_flags(be)
    _add_camera_flags(be)
    be.add_argument("--k", type=int, default=64)
    be.add_argument("--l", type=int, default=64)
    be.add_argument("--dir-mode", choices=("cube", "equirect"), default="cube")
    be.add_argument("--threshold", type=float, default=0.0)
    be.add_argument("--res", default="256", help="comma-separated square resolutions")
    be.add_argument("--reps", type=int, default=3)
    be.add_argument("--step", type=float)
    be.add_argument("--eps-t", type=float, dest="eps_t")
    be.add_argument("--background", metavar="R,G,B")
    be.add_argument("--workers", type=int)
    be.add_argument("--json", action="store_true", help="machine-readable report")
    be.set_defaults(func=cmd_bench)

    e = sub.add_parser("estimate", help="cache size model")
    e.add_argument("--k", type=int, required=True)
    e.add_argument("--l", type=int, required=True)
    e.add_argument("--d", type=int, required=True)
    e.add_argument("--alpha", type=float, required=True)
    e.add_argument("--s-sigma", type=int, default=16, dest="s_sigma")
    e.add_argument("--s-rgb", type=int, default=24, dest="s_rgb")
    e.add_argument("--s-uvw", type=int, default=48, dest="s_uvw")
    e.add_argument("--s-beta", type=int, default=16, dest="s_beta")
    e.add_argument("--json", action="store_true", help="machine-readable report")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("serve", help="interactive render service")
    _add_source_flags(s, cache_ok=True)
    s.add_argument("--k", type=int, default=64)
    s.add_argument("--l", type=int, default=64)
    s.add_argument("--dir-mode", choices=("cube", "equirect"), default="cube")
    s.add_argument("--threshold", type=float, default=0.0)
    s.add_argument("--step", type=float)
    s.add_argument("--eps-t", type=float, dest="eps_t")
    s.add_argument("--background", metavar="R,G,B")
    s.add_argument("--workers", type=int)
    s.add_argument("--host", default=None)
    s.add_argument("--port", type=int, default=None)
    s.add_argument("--assets", metavar="DIR", help="static viewer assets to serve")
    s.set_defaults(func=cmd_serve)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args, parser)
    except (EngineError, OSError, ValueError) as e:
        print(f"plenocache {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
