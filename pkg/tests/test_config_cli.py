import csv
import json
import math

import numpy as np
import pytest

import pathgibbs.cli as cli
from pathgibbs.cli import main, reproduce_figures
from pathgibbs.config import RunConfig, format_box, parse_box
from pathgibbs.configurations import Configuration, MarkedPoint, write_configurations_csv
from pathgibbs.langevin import zero_mark
from pathgibbs.potentials import ConfigError
from pathgibbs.sampler import GNZResult

SMALL = """
[model]
n_steps = 8

[sampler]
box = 0,3
z = 0.4
n_sweeps = 300
burn_in = 20
thinning = 2
moves_per_sweep = 4
gnz_budget = 4

[marks]
mode = zero

[potential]
R = 1.0
"""


def write_cfg(tmp_path, text=SMALL, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_round_trip_is_identity():
    cfg = RunConfig.parse(SMALL, env={})
    back = RunConfig.parse(cfg.serialize(), env={})
    assert back == cfg
    assert back.serialize() == cfg.serialize()
    assert cfg["sampler", "box"] == ((0.0, 3.0),)
    assert cfg["sampler", "n_sweeps"] == 300


def test_box_text():
    box = parse_box("0,4;-1.5,2")
    assert box == ((0.0, 4.0), (-1.5, 2.0))
    assert parse_box(format_box(box)) == box


def test_unknown_keys_and_sections_rejected():
    with pytest.raises(ConfigError):
        RunConfig.parse("[sampler]\nzz = 1\n", env={})
    with pytest.raises(ConfigError):
        RunConfig.parse("[nowhere]\nz = 1\n", env={})
    with pytest.raises(ConfigError):
        RunConfig.parse("", env={"PATHGIBBS_SAMPLER__ZZ": "1"})
    with pytest.raises(ValueError):
        RunConfig.parse("[potential]\nshifted = maybe\n", env={})


def test_environment_override():
    cfg = RunConfig.parse(SMALL, env={"PATHGIBBS_POTENTIAL__LJ_A": "2.5", "PATHGIBBS_RUN__SEED": "11",
                                      "OTHER": "ignored"})
    assert cfg["potential", "lj.a"] == 2.5
    assert cfg["run", "seed"] == 11
    assert cfg["sampler", "z"] == 0.4


def test_missing_config_file_returns_one(tmp_path):
    assert main(["thresholds", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 1
    bad = write_cfg(tmp_path, "[sampler]\nwhat = 1\n", "bad.ini")
    assert main(["thresholds", "--config", bad, "--out", str(tmp_path)]) == 1


def test_sample_is_reproducible(tmp_path, monkeypatch):
    monkeypatch.delenv("PATHGIBBS_RUN__SEED", raising=False)
    cfg = write_cfg(tmp_path)
    outs = [tmp_path / "a" / "nested", tmp_path / "b", tmp_path / "c"]
    seeds = ["1", "1", "2"]
    for out, seed in zip(outs, seeds):
        assert main(["sample", "--config", cfg, "--out", str(out), "--seed", seed]) == 0
    m = [manifest(o) for o in outs]
    assert set(m[0]["files"]) == {"configurations.csv", "chain_summary.csv", "estimators.csv"}
    assert m[0]["files"] == m[1]["files"]
    assert m[0]["files"]["configurations.csv"] != m[2]["files"]["configurations.csv"]
    assert m[0]["seed"] == 1 and m[2]["seed"] == 2
    echoed = RunConfig.parse(m[0]["config"], env={})
    assert echoed["sampler", "n_sweeps"] == 300 and echoed["run", "seed"] == 1
    est = {r["quantity"]: float(r["value"]) for r in read_rows(outs[0] / "estimators.csv")}
    assert "rho1_mean" in est and any(k.startswith("gnz_") for k in est)


def test_strict_exit_code(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path)

    def failing(*args, **kwargs):
        return [GNZResult("one", 1.0, 0.0, 1.0, 0.01)]

    monkeypatch.setattr(cli, "gnz_residual", failing)
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "t"), "--strict"]) == 2


def test_reproduce_figures_data(tmp_path):
    files = reproduce_figures(tmp_path)
    assert {f.name for f in files} == {"lj_shifted_profile.csv", "lj_unshifted_profile.csv",
                                       "threshold_curve_B0.csv", "threshold_curve_B1.csv",
                                       "threshold_summary.csv"}
    shifted = {float(r["u"]): float(r["phi"]) for r in read_rows(tmp_path / "lj_shifted_profile.csv")}
    assert shifted[2.5] == 0.0
    assert shifted[1.0] > 0 and min(shifted.values()) < 0
    unshifted = {float(r["u"]): float(r["phi"]) for r in read_rows(tmp_path / "lj_unshifted_profile.csv")}
    assert unshifted[2.5] < 0
    for B in (0, 1):
        rows = read_rows(tmp_path / f"threshold_curve_B{B}.csv")
        assert float(rows[0]["z"]) == 0.0
        assert float(rows[0]["f"]) == pytest.approx(1.0, abs=1e-12)
    summ = {float(r["B_Phi"]): r for r in read_rows(tmp_path / "threshold_summary.csv")}
    assert float(summ[1.0]["z_ru"]) == pytest.approx(math.exp(-3), rel=1e-14)
    assert float(summ[0.0]["z_ru"]) == pytest.approx(math.exp(-1), rel=1e-14)
    assert float(summ[1.0]["z_crit"]) < float(summ[1.0]["z_ru"])


def test_thresholds_command(tmp_path, capsys):
    assert main(["thresholds", "--out", str(tmp_path), "--C", "1", "--B", "1", "--beta", "1"]) == 0
    assert "z_Ru = 0.04978706837" in capsys.readouterr().out
    row = read_rows(tmp_path / "threshold_summary.csv")[0]
    assert float(row["z_ru"]) == pytest.approx(math.exp(-3), rel=1e-14)
    assert "threshold_summary.csv" in manifest(tmp_path)["files"]


def test_thresholds_estimated_constant(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "\n[run]\nn_anchor = 2\nn_mc = 200\n")
    assert main(["thresholds", "--config", cfg, "--out", str(tmp_path), "--estimate-C"]) == 0
    m = manifest(tmp_path)
    # the default potential is a plain hard core of radius 1 in one dimension
    assert m["C_empirical"] == pytest.approx(2.0, abs=1e-12)


def test_simulate_paths_command(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["simulate-paths", "--config", cfg, "--out", str(tmp_path), "--n", "3", "--moments"]) == 0
    rows = read_rows(tmp_path / "paths.csv")
    assert len(rows) == 3 * 9
    assert all(float(r["m1"]) == 0.0 for r in rows if float(r["s"]) == 0.0)
    mom = read_rows(tmp_path / "moments.csv")[0]
    assert float(mom["estimate"]) >= 1.0


def test_cluster_and_ks_commands(tmp_path):
    cfg = write_cfg(tmp_path)
    T = 9
    pt = lambda x: MarkedPoint(np.array([x]), zero_mark(8, 1))
    configs = [Configuration([pt(0.5)]), Configuration([pt(0.2), pt(2.4)]), Configuration([pt(0.0), pt(0.5)])]
    pts = tmp_path / "points.csv"
    write_configurations_csv(pts, configs, 1, T)
    assert main(["cluster-eval", "--config", cfg, "--out", str(tmp_path / "c"), "--points", str(pts)]) == 0
    rows = read_rows(tmp_path / "c" / "cluster.csv")
    assert [float(r["k"]) for r in rows] == [1.0, 0.0, -1.0]
    assert all(abs(float(r["kbar"])) <= float(r["Q"]) + 1e-12 for r in rows)
    assert main(["ks-eval", "--config", cfg, "--out", str(tmp_path / "k"), "--points", str(pts),
                 "--z", "0.05", "--depth", "2", "--budget", "50", "--boxed"]) == 0
    rows = read_rows(tmp_path / "k" / "ks.csv")
    assert len(rows) == 3
    # overlapping hard-core pair has vanishing correlation
    assert float(rows[2]["estimate"]) == 0.0
    assert 0.8 < float(rows[0]["estimate"]) <= 1.0 + 1e-12
