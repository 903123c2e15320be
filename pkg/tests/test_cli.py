"""Pipeline configuration, annotation mapping, stages, CLI, exit codes."""

import json

import numpy as np
import pytest

import support
from vesseltrack.arrayio import load_volume, save_volume
from vesseltrack.cli import (
    PipelineConfig,
    annotation_to_point,
    main,
    stage_cost,
)
from vesseltrack.errors import BadConfig
from vesseltrack.lifting import load_image
from vesseltrack.projection import lift_pi_inverse


def test_config_from_json_rejects_unknown_keys_and_missing_files(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"image": "x.png", "vintage": 3}))
    with pytest.raises(BadConfig, match="unknown config keys.*vintage"):
        PipelineConfig.from_json(path)
    with pytest.raises(BadConfig, match="missing config file"):
        PipelineConfig.from_json(tmp_path / "absent.json")


def test_config_validation_rules():
    with pytest.raises(BadConfig, match="manifold"):
        PipelineConfig(image="x.png", manifold="r2")
    with pytest.raises(BadConfig, match="model"):
        PipelineConfig(image="x.png", model="reverse")
    with pytest.raises(BadConfig, match="cost_source"):
        PipelineConfig(image="x.png", cost_source="magic")
    with pytest.raises(BadConfig, match="external"):
        PipelineConfig(image="x.png", cost_source="external")
    with pytest.raises(BadConfig, match="external"):
        PipelineConfig(image="x.png", external_cost="c.raw")
    with pytest.raises(BadConfig, match="positive"):
        PipelineConfig(image="x.png", xi=0.0)
    with pytest.raises(BadConfig, match="orientations"):
        PipelineConfig(image="x.png", n_orientations=3)
    cfg = PipelineConfig(image="x.png", seed=[1, 2, 3], tips=[[4, 5, 6]],
                         scales=[2])
    assert cfg.seed == (1.0, 2.0, 3.0)
    assert cfg.tips == ((4.0, 5.0, 6.0),)
    assert cfg.scales == (2.0,)


def test_config_json_round_trip(tmp_path):
    cfg = PipelineConfig(image="x.png", manifold="w2", model="forward",
                         xi=7.0, tips=[[1, 2, 3], [4, 5, 6]])
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.as_dict()))
    assert PipelineConfig.from_json(path) == cfg


def test_annotation_to_point_both_manifolds(tmp_path):
    png = tmp_path / "img.png"
    support.write_tiny_vessel_png(png, n=41, row=20.0)
    img = load_image(png)

    cfg = PipelineConfig(image=str(png), manifold="m2", n_orientations=16)
    ps = cfg.effective_pixel_size
    assert ps == pytest.approx(2 * np.pi / 16)
    pt = annotation_to_point(cfg, (5.0, 20.0, 90.0), img)
    assert np.allclose(pt, [5 * ps, 20 * ps, np.pi / 2])

    cfg = PipelineConfig(image=str(png), manifold="w2", n_orientations=16,
                         pixel_size=0.02)
    center = annotation_to_point(cfg, (20.0, 20.0, 0.0), img)
    assert np.allclose(center, [0.0, 0.0, 0.0], atol=1e-12)
    off = annotation_to_point(cfg, (26.0, 14.0, 30.0), img)
    expected = lift_pi_inverse(cfg.geometry, 6 * 0.02, -6 * 0.02,
                               np.deg2rad(30.0))
    assert np.allclose(off, expected, atol=1e-12)


def test_pipeline_end_to_end_artifacts_and_report(tiny_runs):
    cfg, out, report, _, _ = tiny_runs
    assert report["converged"] is True
    assert "error" not in report
    for name in ("score_abs.raw", "score_abs.json", "cost.raw",
                 "cost.json", "distance.raw", "distance.json",
                 "solve_report.json", "track_00.csv", "track_report.json",
                 "overlay.png", "run_report.json"):
        assert (out / name).exists(), name
    assert set(report["stages"]) == {"lift", "cost", "solve", "track", "plot"}

    solver = report["stages"]["solve"]["solver"]
    assert solver["converged"] is True
    assert solver["residual_sup"] < 0.05

    tracks = report["stages"]["track"]["tracks"]
    assert [t["status"] for t in tracks] == ["ok"]
    assert tracks[0]["cusps"] == []
    assert tracks[0]["finsler_length"] > 0

    disk = json.loads((out / "run_report.json").read_text())
    assert disk["converged"] is True

    for name in ("score_abs.raw", "cost.raw", "distance.raw"):
        values, grid, meta = load_volume(out / name)
        assert grid.manifold == "m2"
        assert values.shape == (40, 40, 16)
    _, _, meta = load_volume(out / "distance.raw")
    assert meta["provenance"]["metric"]["model"] == "forward"
    assert len(meta["provenance"]["seed_index"]) == 3


def test_stage_subcommands_reproduce_pipeline_bytes(tiny_runs, tmp_path):
    cfg, out_a, _, _, _ = tiny_runs
    cfg_json = tmp_path / "cfg.json"
    cfg_json.write_text(json.dumps(cfg.as_dict()))
    out_c = tmp_path / "stages"

    for cmd in ("lift", "cost", "solve", "track", "plot"):
        rc = main([cmd, "--config", str(cfg_json), "--out", str(out_c)])
        assert rc == 0, cmd

    for name in ("score_abs.raw", "cost.raw", "distance.raw", "track_00.csv"):
        assert (out_c / name).read_bytes() == (out_a / name).read_bytes(), name
    assert (out_c / "overlay.png").exists()


def test_run_exit_codes(tiny_runs, tmp_path):
    cfg, _, _, _, _ = tiny_runs

    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 1

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"image": "x.png", "vintage": 3}))
    assert main(["run", "--config", str(bad)]) == 1

    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"image": str(tmp_path / "absent.png")}))
    out_broken = tmp_path / "out_broken"
    assert main(["run", "--config", str(broken), "--out", str(out_broken)]) == 1
    disk = json.loads((out_broken / "run_report.json").read_text())
    assert disk["error"]["stage"] == "lift"

    short = tmp_path / "short.json"
    d = cfg.as_dict()
    d.update(tips=[], n_max=60)
    short.write_text(json.dumps(d))
    out_short = tmp_path / "out_short"
    assert main(["run", "--config", str(short), "--out", str(out_short)]) == 3
    disk = json.loads((out_short / "run_report.json").read_text())
    assert disk["converged"] is False
    assert "error" not in disk
    assert disk["stages"]["solve"]["solver"]["stop_reason"] == "n_max"


def test_plot_without_tracks_writes_bare_overlay(tmp_path):
    png = tmp_path / "img.png"
    support.write_tiny_vessel_png(png, n=40, row=20.0)
    out = tmp_path / "out"
    rc = main(["plot", "--image", str(png), "--out", str(out), "--tracks"])
    assert rc == 0
    assert (out / "overlay.png").exists()


def test_external_cost_source(tmp_path):
    png = tmp_path / "img.png"
    support.write_tiny_vessel_png(png, n=40, row=20.0)
    grid = support.m2_grid(10, 10, 8, dx=0.3)
    ext = tmp_path / "ext.raw"
    save_volume(ext, np.full(grid.shape, 0.7, np.float32), grid, kind="cost")

    cfg = PipelineConfig(image=str(png), cost_source="external",
                         external_cost=str(ext))
    out = tmp_path / "out"
    out.mkdir()
    path = stage_cost(cfg, out, None)
    values, got_grid, meta = load_volume(path)
    assert np.allclose(values, 0.7)
    assert got_grid.shape == grid.shape
    assert meta["provenance"]["source"] == "external"

    rc = main(["cost", "--image", str(png), "--source", "external",
               "--external", str(ext), "--out", str(tmp_path / "out2")])
    assert rc == 0
    assert (tmp_path / "out2" / "cost.raw").exists()

    zero = tmp_path / "zero.raw"
    values = np.full(grid.shape, 0.7, np.float32)
    values[0, 0, 0] = 0.0
    save_volume(zero, values, grid, kind="cost")
    cfg = PipelineConfig(image=str(png), cost_source="external",
                         external_cost=str(zero))
    with pytest.raises(BadConfig, match="positive"):
        stage_cost(cfg, out, None)
