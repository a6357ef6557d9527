import json

import pytest

from cdmi.cli import main

SHORT = ["--set", "t1_periods=0.3", "--set", "poly_order=3"]


def test_usage_errors(tmp_path, capsys):
    out = str(tmp_path / "r.json")
    assert main([]) == 2
    assert main(["detect", "--mode", "single", "--out", out]) == 2
    assert main(["detect", "--mode", "integrated-dense", "--alpha-x", "0.5", "--out", out]) == 2
    assert main(["detect", "--mode", "single", "--alpha-x", "1.5", "--out", out]) == 2
    assert main(["detect", "--set", "nokey=1", "--out", out]) == 2
    assert main(["detect", "--config", str(tmp_path / "missing.json"), "--out", out]) == 2
    assert main(["detect", "--rk-set", "rk4", "--out", out]) == 2
    assert main(["propagate", "--epochs", "[1.0", "--out", out]) == 2
    assert not (tmp_path / "r.json").exists()


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"poly_order": 3,,}')
    assert main(["detect", "--config", str(cfg), "--out", str(tmp_path / "r.json")]) == 2
    assert "line 1" in capsys.readouterr().err


def test_propagate(tmp_path):
    out = tmp_path / "p.json"
    assert main(["propagate", "--epochs", "[0.5, 1.0]", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["states"]) == 2
    assert abs(doc["jacobi"][0] - doc["jacobi"][1]) < 1e-10


def test_detect_single_at_full_confidence(tmp_path):
    out = tmp_path / "r.json"
    assert main(["detect", *SHORT, "--case", "custom", "--mode", "single", "--alpha-x", "1", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["flag"] is False and doc["curve"][0]["alpha_z"] == 0.0
    assert doc["config"]["poly_order"] == 3


def test_detect_custom_and_obs_round_trip(tmp_path):
    custom = tmp_path / "c.json"
    custom.write_text(json.dumps({"dv": [0.0, 1e-3, 0.0]}))
    out = tmp_path / "r.json"
    assert main(["detect", *SHORT, "--case", "custom", "--custom", str(custom), "--trace", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["mode"] == "integrated-adaptive" and 0 <= doc["P"] <= 1
    assert "trace" in doc["diagnostics"]


def test_curve_export(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["curve", *SHORT, "--case", "custom", "--set", "grid_step=0.25", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "case_id,alpha_x,alpha_z,m_z,iterations"
    assert len(lines) == 6 and lines[-1].startswith("custom,1,0,")


def test_detect_fixed_case_requires_one_epoch(tmp_path):
    out = tmp_path / "r.json"
    args = ["detect", *SHORT, "--set", "extra_epoch_offsets_periods=[0.01]", "--case", "table4-maneuver"]
    assert main(args + ["--out", str(out)]) == 2


def test_obs_file_epoch_mismatch(tmp_path):
    obs = tmp_path / "o.json"
    obs.write_text(json.dumps({"epochs_nd": [1.0], "alpha_rad": [0.1], "beta_rad": [0.0], "noise_std_arcsec": 5}))
    assert main(["detect", *SHORT, "--obs", str(obs), "--out", str(tmp_path / "r.json")]) == 2


def test_detection_failure_exit_code(tmp_path):
    out = tmp_path / "r.json"
    args = ["detect", *SHORT, "--set", "max_iter=1", "--case", "custom", "--mode", "single", "--alpha-x", "0.5"]
    assert main(args + ["--out", str(out)]) == 1
    assert not out.exists()


@pytest.mark.parametrize("target", ["dir", "file"])
def test_mc_is_independent_of_jobs(tmp_path, target):
    outs = []
    for jobs in (1, 2):
        base = tmp_path / f"j{jobs}"
        out = base if target == "dir" else base / "s.json"
        assert main(["mc", *SHORT, "--runs", "3", "--seed", "11", "--jobs", str(jobs), "--curves",
                     "--sensitivity", "--out", str(out)]) == 0
        prefix = "" if target == "dir" else "s."
        main_json = base / ("summary.json" if target == "dir" else "s.json")
        outs.append((main_json.read_bytes(), (base / f"{prefix}runs.csv").read_bytes(),
                     (base / f"{prefix}curves.csv").read_bytes()))
        assert (base / f"{prefix}timings.json").exists() and (base / f"{prefix}sensitivity.csv").exists()
    assert outs[0] == outs[1]


def test_sweep(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", *SHORT, "--param", "dv", "--values", "[0, 1]", "--runs", "2", "--jobs", "1",
                 "--out", str(out)]) == 0
    doc = json.loads((out / "sweep.json").read_text())
    assert doc["values"] == [0.0, 1.0]
    assert doc["points"][0]["counts"] == {"non-maneuver": 2, "maneuver": 0}
    assert (out / "runs_dv_0.csv").exists() and (out / "runs_dv_1.csv").exists()
    assert main(["sweep", *SHORT, "--param", "dv", "--values", "3", "--out", str(out)]) == 2
