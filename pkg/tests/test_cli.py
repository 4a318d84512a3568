import json
import subprocess
import sys

import numpy as np
import pytest

from periodic_loss import estimate as est
from periodic_loss.cli import main
from periodic_loss.config import StudyConfig
from periodic_loss import ConfigError


def cfg_file(tmp_path, **kw):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(kw))
    return str(p)


def read(path):
    return json.loads(path.read_text())


def test_config_rejects_unknown_and_bad_types():
    with pytest.raises(ConfigError, match="bogus: unknown key"):
        StudyConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError, match="n_cells: expected int"):
        StudyConfig.from_dict({"n_cells": "3"})
    with pytest.raises(ConfigError, match="lam: must be > 0"):
        StudyConfig.from_dict({"lam": -1})


def test_config_round_trip():
    c = StudyConfig.from_dict({"lam": 1, "u_bar": 2})
    assert c.lam == 1.0 and isinstance(c.lam, float)
    assert StudyConfig.from_dict(c.to_dict()) == c
    assert c.digest() == StudyConfig.from_dict(c.to_dict()).digest()


def test_limit_report(tmp_path):
    cfg = cfg_file(tmp_path, mean_x=1 / 0.019, mean_y=2.13, u_bar=1.55, n_cells=660)
    assert main(["limit", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    r = read(tmp_path / "o" / "limit.json")
    assert r["L_inf"] == pytest.approx(39.8, abs=0.05)
    assert r["loss_fraction"] == pytest.approx(0.0389, abs=1e-4)
    assert r["seed"] == 3 and r["version"] and len(r["config_hash"]) == 64
    assert r["inputs"]["n_cells"] == 660


def test_limit_zero_repair(tmp_path):
    cfg = cfg_file(tmp_path, mean_y=0.0)
    assert main(["limit", "--config", cfg, "--out", str(tmp_path)]) == 0
    r = read(tmp_path / "limit.json")
    assert r["L_inf"] == 0 and r["loss_fraction"] == 0 and r["i_bar"] == 0


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["limit", "--config", cfg_file(tmp_path, nope=1), "--out", str(tmp_path)]) == 2
    assert "nope" in capsys.readouterr().err
    assert main(["limit", "--config", str(tmp_path / "missing.json")]) == 2


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "t.csv"
    bad.write_text("wrong,header\n")
    assert main(["fit", "--config", cfg_file(tmp_path, tickets_path=str(bad)), "--out", str(tmp_path)]) == 3


def test_budget_exit_code(tmp_path):
    # two cycles cannot reach a 10% stage for this slow-mixing cell
    cfg = cfg_file(tmp_path, n_cycles=2, reps=3)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 4
    r = read(tmp_path / "simulate.json")
    assert r["stage"]["not_reached"] >= 2
    assert r["warnings"]


def test_flags_override_config(tmp_path):
    cfg = cfg_file(tmp_path, reps=50, seed=1, n_cycles=300)
    assert main(["simulate", "--config", cfg, "--reps", "3", "--seed", "8", "--out", str(tmp_path)]) in (0, 4)
    r = read(tmp_path / "simulate.json")
    assert r["reps"] == 3 and r["seed"] == 8
    assert (tmp_path / "running_by_cycle.csv").read_text().startswith("n,loss,relative_error\n")


def test_network_noise_comparison(tmp_path):
    cfg = cfg_file(tmp_path, study="network", n_cells=50, horizon=200.0, reps=2, noise="ou")
    main(["simulate", "--config", cfg, "--out", str(tmp_path)])
    r = read(tmp_path / "simulate.json")
    assert "clean_stage" in r and r["unit"] == "hours"


def test_bounds_outputs(tmp_path):
    cfg = cfg_file(tmp_path, lam=10.0, period=1.0, bound_js=5, bins=1024)
    assert main(["bounds", "--config", cfg, "--out", str(tmp_path)]) == 0
    r = read(tmp_path / "bounds.json")
    assert r["general_exponential"]["alpha_diff"] < 1e-6
    assert r["general_uniform"]["alpha"] == 0
    assert len(r["sup_bound"]) == 5
    rows = np.loadtxt(tmp_path / "alpha_grid.csv", delimiter=",", skiprows=1)
    grid = rows[:, 2].reshape(8, 6)
    assert np.all(np.diff(grid, axis=0) > 0) and np.all(np.diff(grid, axis=1) > 0)


def test_smoothing_outputs(tmp_path):
    assert main(["smoothing", "--out", str(tmp_path)]) == 0
    r = read(tmp_path / "smoothing.json")
    d = r["sup_distance"]
    assert d["0"] > d["1"] >= d["10"]
    assert d["10"] < 0.02
    data = np.loadtxt(tmp_path / "smoothing.csv", delimiter=",", skiprows=1)
    x = data[:, 0]
    # column for n=0 is the wrapped exponential: geometric-series oracle at bin centres
    oracle = 10 * np.exp(-10 * x) / (1 - np.exp(-10.0))
    np.testing.assert_allclose(data[:, 1], oracle, rtol=2e-3)


def test_fit_outputs(tmp_path):
    rng = np.random.default_rng(5)
    est.write_tickets(tmp_path / "t.csv",
                      est.synthesize_tickets(12.6, lambda r, s: r.exponential(1 / 0.47, s), 660, 5000, rng))
    est.write_kpi(tmp_path / "k.csv", est.synthesize_kpi(est.operator_week(), 2, 24 * 14, rng))
    cfg = cfg_file(tmp_path, tickets_path=str(tmp_path / "t.csv"), kpi_path=str(tmp_path / "k.csv"),
                   n_cells=660, merge_overlaps=False)
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    r = read(tmp_path / "o" / "fit.json")
    assert r["interarrival"]["lambda_hat"] == pytest.approx(12.6, rel=0.05)
    assert r["kpi"]["u_bar"] == pytest.approx(1.55)
    assert r["limit"]["L_inf"] == pytest.approx(39.8, rel=0.1)
    for name in ("profile.csv", "delta.csv", "maintenance_hist.csv"):
        assert (tmp_path / "o" / name).exists()


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "periodic_loss", "limit", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert (tmp_path / "limit.json").exists()


def test_hash_ignores_output_location():
    a = StudyConfig.from_dict({"out_dir": "x", "threads": 4})
    assert a.digest() == StudyConfig().digest()
    assert StudyConfig.from_dict({"seed": 2}).digest() != StudyConfig().digest()
