"""Command line interface: exit codes, outputs, end-to-end pipelines.

Exit convention: 0 success, 1 usage errors, 2 runtime failures.
Each test shells out through the real entry point.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from plenocache.images import load_png


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "plenocache.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
        timeout=300,
    )


@pytest.fixture(scope="module")
def baked(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cache = root / "c.plc"
    r = run_cli("bake", "--scene", "lambert-sphere", "--k", "32", "--l", "8",
                "--out", str(cache))
    assert r.returncode == 0, r.stderr
    return cache


class TestExitCodes:
    def test_no_command_is_usage_error(self):
        r = run_cli()
        assert r.returncode == 1

    def test_unknown_flag_is_usage_error(self):
        r = run_cli("estimate", "--bogus", "1")
        assert r.returncode == 1
        assert "usage" in (r.stderr + r.stdout).lower()

    def test_missing_input_file_is_runtime_error(self, tmp_path):
        r = run_cli("render", "--cache", str(tmp_path / "missing.plc"),
                    "--out", str(tmp_path / "x.png"))
        assert r.returncode == 2
        assert r.stderr.strip()

    def test_conflicting_sources_rejected(self, tmp_path):
        r = run_cli("bake", "--scene", "lambert-sphere", "--weights", "w.plw",
                    "--out", str(tmp_path / "c.plc"))
        assert r.returncode in (1, 2)

    def test_help_exits_clean(self):
        r = run_cli("--help")
        assert r.returncode == 0
        assert "bake" in r.stdout and "render" in r.stdout


class TestEstimate:
    def test_json_reference_integers(self):
        r = run_cli("estimate", "--k", "1024", "--l", "1024", "--d", "8",
                    "--alpha", "1.0", "--json")
        assert r.returncode == 0
        data = json.loads(r.stdout)
        assert data["m_nerf_bytes"] == 5_629_499_534_213_120
        assert data["m_fastnerf_bytes"] == 53_687_091_200 + 16_777_216

    def test_human_readable(self):
        r = run_cli("estimate", "--k", "512", "--l", "256", "--d", "4",
                    "--alpha", "0.3")
        assert r.returncode == 0
        assert "bytes" in r.stdout


class TestFit:
    def test_fit_reports_residual_and_saves(self, tmp_path):
        out = tmp_path / "t.plt"
        r = run_cli("fit", "--scene", "spec-sphere", "--p", "10", "--q", "24",
                    "--d", "2", "--iters", "60", "--out", str(out))
        assert r.returncode == 0, r.stderr
        assert "residual" in r.stdout
        assert out.exists()
        residual = float(r.stdout.split("residual")[1].split()[0])
        assert residual < 1e-6


class TestBakeMeshRender:
    def test_bake_reports_occupancy(self, baked):
        assert baked.exists()

    def test_mesh_stl_and_obj(self, baked, tmp_path):
        stl = tmp_path / "m.stl"
        obj = tmp_path / "m.obj"
        assert run_cli("mesh", "--cache", str(baked), "--out", str(stl)).returncode == 0
        assert run_cli("mesh", "--cache", str(baked), "--out", str(obj)).returncode == 0
        assert stl.stat().st_size > 84
        assert obj.read_text().startswith(("v ", "#"))

    def test_render_deterministic_across_runs(self, baked, tmp_path):
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        args = ("render", "--cache", str(baked), "--orbit", "0.6,0.25,1.6",
                "--width", "40", "--height", "40")
        assert run_cli(*args, "--out", str(a)).returncode == 0
        assert run_cli(*args, "--out", str(b)).returncode == 0
        assert a.read_bytes() == b.read_bytes()

    def test_render_gated_matches_ungated(self, baked, tmp_path):
        gated, plain = tmp_path / "g.png", tmp_path / "p.png"
        args = ("render", "--cache", str(baked), "--orbit", "0.6,0.25,1.6",
                "--width", "40", "--height", "40")
        assert run_cli(*args, "--out", str(gated)).returncode == 0
        assert run_cli(*args, "--no-gate", "--out", str(plain)).returncode == 0
        np.testing.assert_array_equal(load_png(gated), load_png(plain))

    def test_render_pfm_sidecar(self, baked, tmp_path):
        png = tmp_path / "r.png"
        pfm = tmp_path / "r.pfm"
        r = run_cli("render", "--cache", str(baked), "--width", "24",
                    "--height", "24", "--out", str(png), "--pfm", str(pfm))
        assert r.returncode == 0
        assert png.exists() and pfm.exists()

    def test_render_direct_from_scene(self, tmp_path):
        out = tmp_path / "d.png"
        r = run_cli("render", "--scene", "spec-sphere", "--k", "48",
                    "--width", "24", "--height", "24", "--out", str(out))
        assert r.returncode == 0, r.stderr
        assert out.exists()


class TestBench:
    def test_json_shape(self):
        r = run_cli("bench", "--scene", "spec-sphere", "--k", "24",
                    "--res", "24", "--reps", "1", "--json")
        assert r.returncode == 0, r.stderr
        data = json.loads(r.stdout)
        entry = data["resolutions"][0]
        assert entry["resolution"] == 24
        assert entry["speedup"] > 0
        assert len(entry["cached_ms"]) == 1


class TestConfigDriven:
    def test_config_render(self, tmp_path):
        cfg = {
            "schema_version": 1,
            "scene": {"analytic": {"id": "lambert-sphere"}},
            "bake": {"k": 24, "l": 8},
        }
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "r.png"
        r = run_cli("render", "--config", str(cfg_path), "--width", "24",
                    "--height", "24", "--out", str(out))
        assert r.returncode == 0, r.stderr
        assert out.exists()

    def test_config_conflicts_with_inline_scene(self, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(
            {"schema_version": 1, "scene": {"analytic": {"id": "two-blobs"}}}
        ))
        r = run_cli("bake", "--config", str(cfg_path), "--scene", "two-blobs",
                    "--out", str(tmp_path / "c.plc"))
        assert r.returncode in (1, 2)
