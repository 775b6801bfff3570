"""CLI exит codes, artifact schemas, and determinism."""

import json
from pathlib import Path

import numpy as np
import pytest

from celloed.cli import main


def _read_csv_rows(path):
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln and not ln.startswith("#")]
    return lines[0].split(","), lines[1:]


def test_simulate_1c_writes_3800_rows(tmp_path):
    code = main(["simulate", "--out", str(tmp_path)])
    assert code == 0
    header, rows = _read_csv_rows(tmp_path / "simulation.csv")
    assert header == ["t_s", "current_A", "voltage_V", "soc", "c_se_p", "c_se_n"]
    assert len(rows) == 3800
    summary = json.loads((tmp_path / "simulation_summary.json").read_text())
    assert summary["n_steps"] == 3800
    assert "fingerprint" in summary


def test_missing_parameter_file_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"cell_params": str(tmp_path / "nope.json")}))
    code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 2
    assert "nope.json" in capsys.readouterr().err


def test_unknown_config_section_is_config_error(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_deterministic_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        code = main(["simulate", "--out", str(out), "--deterministic", "--seed", "7"])
        assert code == 0
    assert (a / "simulation.csv").read_bytes() == (b / "simulation.csv").read_bytes()
    assert (a / "simulation_summary.json").read_bytes() == (b / "simulation_summary.json").read_bytes()


def test_sensitivity_map_argmax_cells(tmp_path):
    code = main(["sensitivity-map", "--out", str(tmp_path), "--target", "kn"])
    assert code == 0
    summary = json.loads((tmp_path / "sensitivity_map_k_n.json").read_text())
    assert summary["argmax_soc_per_c_rate"]["5C"] == pytest.approx(0.95)
    header, rows = _read_csv_rows(tmp_path / "sensitivity_map_k_n.csv")
    assert header == ["c_rate", "soc", "squared_sensitivity"]
    assert len(rows) == 50


def test_profile_command_rcid(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "profile": {"kind": "rcid", "c_rate": 1.0, "rest_s": 60.0,
                    "soc_stops": [0.95, 0.9]},
    }))
    code = main(["profile", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 0
    files = list(tmp_path.glob("profile_rcid*.csv"))
    assert len(files) == 1


def test_estimate_on_short_profile(tmp_path):
    # build a short but informative profile first
    prof_csv = tmp_path / "p.csv"
    from celloed import model, profiles

    prof = model.ExcitationProfile(dt=1.0, currents=np.tile([150.0, -150.0], 100))
    profiles.save_profile_csv(prof, prof_csv)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"estimation": {"n_starts": 3}}))
    code = main(["estimate", "--config", str(cfg), "--out", str(tmp_path),
                 "--profile-csv", str(prof_csv), "--target", "kp"])
    assert code == 0
    agg = json.loads((tmp_path / "estimation_k_p.json").read_text())
    assert agg["identifiable"]
    assert agg["median_abs_pct_error"] < 1.0


def test_train_zero_episodes_artifact(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "env": {"episode_len": 20},
        "td3": {"max_episodes": 0, "hidden_sizes": [8, 8]},
    }))
    code = main(["train", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 0
    weights = json.loads((tmp_path / "td3_weights_k_p.json").read_text())
    assert weights["format_version"] == 1
    assert set(weights["networks"]) == {
        "actor", "actor_target", "critic1", "critic2", "critic1_target", "critic2_target",
    }
    log_lines = (tmp_path / "training_log_k_p.csv").read_text().splitlines()
    assert log_lines[1] == "episode,return,eval_fi_raw,steps,violations"
    assert len(log_lines) == 2  # fingerprint + header, no episodes


def test_tiny_train_and_compare_pipeline(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "env": {"episode_len": 25},
        "td3": {"max_episodes": 6, "hidden_sizes": [8, 8], "warmup_episodes": 2,
                "eval_every": 3, "buffer_capacity": 5000},
        "estimation": {"n_starts": 2},
        "profile": {"kind": "cc_discharge", "c_rate": 1.0, "total_length_s": 25.0,
                    "cutoff_v": 2.8},
    }))
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    # a 25 s 1C leg never reaches the cutoff; use the designed profile twice instead
    designed = tmp_path / "designed_profile_k_p.csv"
    assert designed.exists()
    compare_cfg = tmp_path / "cmp.json"
    compare_cfg.write_text(json.dumps({
        "estimation": {"n_starts": 2},
        "compare": {"methods": [
            {"label": "DRL", "profile_csv": str(designed),
             "weights_json": str(tmp_path / "td3_weights_k_p.json")},
            {"label": "again", "profile_csv": str(designed)},
        ]},
    }))
    assert main(["compare", "--config", compare_cfg.as_posix(), "--out", str(tmp_path)]) == 0
    header, rows = _read_csv_rows(tmp_path / "comparison.csv")
    assert len(rows) == 2
    text = (tmp_path / "comparison.txt").read_text()
    assert "DRL" in text and "FI k_p" in text


def test_compare_without_methods_is_config_error(tmp_path):
    assert main(["compare", "--out", str(tmp_path)]) == 2
