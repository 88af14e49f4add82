import json

import numpy as np
import pytest

from bml.cli import main
from bml.dynamics import run
from bml.harness import ConfigError, ExperimentConfig, PhaseThresholds, classify_phase, run_experiment, sha256_file, verify_manifest
from bml.lattice import InitialLaw, ParameterError, Site, TorusGrid, sample_initial, save_snapshot
from bml.render import read_ppm, render_snapshot, to_rgb

# rendering -------------------------------------------------------------------


def test_empty_grid_renders_white(tmp_path):
    path = render_snapshot(TorusGrid.empty((7, 5)), tmp_path / "e.ppm")
    img = read_ppm(path)
    assert img.shape == (5, 7, 3)
    assert (img == 255).all()
    assert path.read_bytes().startswith(b"P6\n7 5\n255\n")


def test_single_east_car_is_one_red_pixel():
    img = to_rgb(TorusGrid.from_sites((4, 4), {(1, 1): Site.EAST}))
    red = np.all(img == (255, 0, 0), axis=-1)
    assert red.sum() == 1
    # Row 0 is the top of the image, i.e. the largest y.
    assert red[4 - 1 - 1, 1]


def test_full_grid_has_no_white():
    img = to_rgb(sample_initial((9, 9), InitialLaw(1.0), 0))
    assert not np.all(img == 255, axis=-1).any()
    blue = np.all(img == (0, 0, 255), axis=-1).sum()
    red = np.all(img == (255, 0, 0), axis=-1).sum()
    assert blue + red == 81


def test_overlay_is_green():
    g = TorusGrid.from_sites((5, 5), {(0, 0): Site.NORTH})
    img = to_rgb(g, [[(0, 0), (6, 1)]])
    green = np.all(img == (0, 255, 0), axis=-1)
    assert green.sum() == 2 and green[4, 0] and green[3, 1]


def test_render_rejects_3d(tmp_path):
    with pytest.raises(ParameterError):
        render_snapshot(TorusGrid.empty((3, 3, 3)), tmp_path / "x.ppm")


def test_png_output(tmp_path):
    pytest.importorskip("PIL")
    from PIL import Image

    g = sample_initial((12, 8), InitialLaw(0.5), 1)
    path = render_snapshot(g, tmp_path / "g.png")
    assert np.array_equal(np.asarray(Image.open(path)), to_rgb(g))


# phase labels ----------------------------------------------------------------


def test_frozen_run_is_jammed():
    stats = run(sample_initial((8, 8), InitialLaw(1.0), 0), 100)
    assert classify_phase(stats) == "jammed"


def test_single_car_is_free_flowing():
    stats = run(TorusGrid.from_sites((9, 9), {(3, 3): Site.EAST}), 1000)
    assert classify_phase(stats, PhaseThresholds(), (500, 1000)) == "free-flowing"


def test_thresholds_are_respected():
    stats = run(TorusGrid.from_sites((9, 9), {(3, 3): Site.EAST}), 1000)
    assert classify_phase(stats, PhaseThresholds(0.01, 0.6), (500, 1000)) == "intermediate"
    assert classify_phase(stats, PhaseThresholds(0.6, 0.7), (500, 1000)) == "jammed"


# configuration ---------------------------------------------------------------


def test_config_errors_list_fields():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"kind": "simulate", "p": 2.0, "engine": "warp", "bogus": 1})
    assert info.value.fields == {"bogus": "unknown field"}
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"kind": "simulate", "p": 2.0, "engine": "warp", "steps": 0})
    assert {"p", "engine", "steps"} <= set(info.value.fields)


def test_config_module_checks():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"kind": "good-edge", "M": 3, "k": 2})
    assert "M" in info.value.fields
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"kind": "skew-cycle", "a": [1, 2], "b": [2, 4]})
    assert "a" in info.value.fields
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kind": "simulate", "dims": [10, 10, 10]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kind": "simulate", "dims": "ten"})


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict({"kind": "phase-scan", "ps": [0.2, 0.4], "thresholds": {"low": 0.02, "high": 0.4}})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg


# runs ------------------------------------------------------------------------


def small_sim(tmp_path, name, **extra):
    cfg = {"kind": "simulate", "dims": [40, 40], "p": 0.5, "steps": 600, "seeds": [1, 2], "out_dir": str(tmp_path / name)}
    cfg.update(extra)
    return run_experiment(cfg)


def test_simulate_record_and_manifest(tmp_path):
    rec = small_sim(tmp_path, "a")
    names = {e["path"] for e in rec.manifest}
    assert {"runs.csv", "final_seed1.ppm", "final_seed2.bml", "moves_seed1.csv"} <= names
    assert verify_manifest(rec, tmp_path / "a") == []
    saved = json.loads((tmp_path / "a" / "record.json").read_text())
    assert saved["stats"] == rec.stats
    (tmp_path / "a" / "runs.csv").write_text("tampered")
    assert verify_manifest(saved, tmp_path / "a") == ["runs.csv"]


def test_reproducible_bit_exact(tmp_path):
    a = small_sim(tmp_path, "a")
    b = small_sim(tmp_path, "b")
    assert a.stats == b.stats
    assert [e["sha256"] for e in a.manifest] == [e["sha256"] for e in b.manifest]


def test_worker_fan_out_matches_serial(tmp_path):
    a = small_sim(tmp_path, "a")
    b = small_sim(tmp_path, "b", threads=2)
    assert a.stats == b.stats


def test_jammed_snapshot(tmp_path):
    rec = run_experiment({"kind": "simulate", "dims": [200, 200], "p": 0.8, "steps": 20000, "seeds": [0], "out_dir": str(tmp_path)})
    r = rec.stats["runs"][0]
    assert r["frozen_at"] is not None and r["phase"] == "jammed"
    assert read_ppm(tmp_path / "final_seed0.ppm").shape == (200, 200, 3)


def test_poisson_and_ddim_simulations(tmp_path):
    rec = run_experiment({"kind": "simulate", "dims": [10, 10, 10], "engine": "ddim", "p": 0.9, "steps": 500, "out_dir": str(tmp_path / "d")})
    assert rec.stats["runs"][0]["frozen"]
    rec = run_experiment({"kind": "simulate", "dims": [20, 20], "engine": "poisson", "p": 0.9, "steps": 100000, "out_dir": str(tmp_path / "p")})
    assert rec.stats["runs"][0]["events"] <= 100000


def test_phase_scan_json(tmp_path):
    rec = run_experiment({"kind": "phase-scan", "dims": [30, 30], "ps": [0.05, 0.95], "steps": 400, "seeds": [0, 1], "format": "json", "out_dir": str(tmp_path)})
    assert rec.stats["summary"]["0.05"]["free-flowing"] == 2
    assert rec.stats["summary"]["0.95"]["jammed"] == 2
    rows = json.loads((tmp_path / "phase_scan.json").read_text())
    assert len(rows) == 4 and set(rows[0]) >= {"p", "seed", "phase"}


def test_other_experiments(tmp_path):
    rec = run_experiment({"kind": "blocking", "dims": [30, 30], "p": 1.0, "seeds": [0, 1], "out_dir": str(tmp_path / "b")})
    assert rec.stats["found"] == 2
    rec = run_experiment({"kind": "good-edge", "M": 10, "k": 2, "ps": [0.0, 1.0], "trials": 5, "out_dir": str(tmp_path / "g")})
    assert rec.stats["estimates"][0]["phat"] == 0.0
    rec = run_experiment({"kind": "target-hit", "y": [20, 20], "k": 20, "trials": 5, "out_dir": str(tmp_path / "t")})
    assert rec.stats["estimate"] == 1.0
    rec = run_experiment({"kind": "skew-cycle", "q": 1.0, "rs": [1, 2], "trials": 3, "out_dir": str(tmp_path / "s")})
    assert [e["estimate"] for e in rec.stats["estimates"]] == [1.0, 1.0]
    assert rec.stats["estimates"][0]["vertices"] == 18 and rec.stats["estimates"][0]["diag_ell"] == 6
    rec = run_experiment({"kind": "wchain", "steps": 1_000_000, "out_dir": str(tmp_path / "w")})
    assert rec.stats["pooled_increment_error"] <= 0.01 and rec.stats["max_row_error"] <= 0.01


def test_render_experiment(tmp_path):
    g = sample_initial((16, 12), InitialLaw(0.6), 2)
    snap = save_snapshot(g, tmp_path / "g.bml")
    rec = run_experiment({"kind": "render", "snapshot": str(snap), "out_dir": str(tmp_path / "r")})
    assert np.array_equal(read_ppm(tmp_path / "r" / "snapshot.ppm"), to_rgb(g))
    assert rec.stats["dims"] == [16, 12]


# command line ----------------------------------------------------------------


def test_cli_success(tmp_path, capsys):
    code = main(["simulate", "--dims", "20x20", "--p", "0.3", "--steps", "100", "--seed", "4", "--n-seeds", "2", "--out-dir", str(tmp_path), "--format", "json"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert [r["seed"] for r in out["stats"]["runs"]] == [4, 5]
    assert (tmp_path / "runs.json").exists()


def test_cli_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "wchain", "steps": 1000, "out_dir": str(tmp_path / "o")}))
    assert main(["wchain", "--config", str(cfg), "--steps", "2000"]) == 0
    assert json.loads(capsys.readouterr().out)["stats"]["steps"] == 2000


def test_cli_config_errors(tmp_path, capsys):
    assert main(["good-edge", "--M", "3", "--k", "2", "--out-dir", str(tmp_path)]) == 2
    assert "M" in json.loads(capsys.readouterr().err)["fields"]
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["simulate", "--config", str(bad)]) == 2
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--engine", "warp"])
    assert info.value.code == 2


def test_cli_runtime_error(tmp_path, capsys):
    # A file where the output directory should go fails only at run time.
    blocker = tmp_path / "taken"
    blocker.write_text("")
    assert main(["wchain", "--steps", "10", "--out-dir", str(blocker / "sub")]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "runtime"


def test_sha256_helper(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"abc")
    assert sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
