import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fow.cli import EXIT_CONFIG, EXIT_DATA, EXIT_INFEASIBLE, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = {
    "stream": {"num_segments": 6, "days": 40, "events_per_day": 600},
    "schedule": {"train_days": [20, 21, 22, 23, 24, 25, 26], "eval_horizon_days": 7.0},
}


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("FOW_SEED", raising=False)


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL), encoding="utf-8")
    return str(p)


def run(cmd, config, out, *extra):
    return main([cmd, "--config", str(config), "--out", str(out), *extra])


def read_report(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# config_hash=")
    rows = list(csv.DictReader(lines[1:]))
    return lines[0], rows


def test_simulate_default_counts(tmp_path):
    assert run("simulate", CONFIGS / "default.json", tmp_path) == EXIT_OK
    lines = (tmp_path / "events.jsonl").read_bytes().splitlines()
    assert len(lines) == 120 * 2000
    manifest = json.loads((tmp_path / "events.manifest.json").read_text())
    assert manifest["n_events"] == 240000 and manifest["seed"] == 0 and len(manifest["config_hash"]) == 16


def test_simulate_is_byte_identical(tmp_path, small_cfg):
    assert run("simulate", small_cfg, tmp_path / "a") == EXIT_OK
    assert run("simulate", small_cfg, tmp_path / "b") == EXIT_OK
    assert (tmp_path / "a" / "events.jsonl").read_bytes() == (tmp_path / "b" / "events.jsonl").read_bytes()


def test_simulate_zero_rate(tmp_path, small_cfg):
    assert run("simulate", small_cfg, tmp_path, "--set", "stream.base_p_conv=0") == EXIT_OK
    text = (tmp_path / "events.jsonl").read_text()
    assert '"converted":true' not in text and '"converted":false' in text


def test_seed_env_override(tmp_path, small_cfg, monkeypatch):
    monkeypatch.setenv("FOW_SEED", "42")
    assert run("simulate", small_cfg, tmp_path) == EXIT_OK
    assert json.loads((tmp_path / "events.manifest.json").read_text())["seed"] == 42


def test_analyze_stationary_calibration(tmp_path):
    assert run("analyze", CONFIGS / "stationary.json", tmp_path) == EXIT_OK
    _, rows = read_report(tmp_path / "analyze.csv")
    assert [r["day"] for r in rows] == [str(d) for d in range(1, 8)]
    assert list(rows[0]) == ["day", "empirical_cdf", "est_linear", "est_rational", "est_exp",
                             "cal_linear", "cal_rational", "cal_exp"]
    for r in rows:
        cals = [float(r[c]) for c in ("cal_linear", "cal_rational", "cal_exp")]
        if r["day"] in ("1", "7"):
            assert cals == [1.0, 1.0, 1.0]
        else:
            assert all(0.97 <= c <= 1.03 for c in cals), r


def test_analyze_reads_a_simulated_log(tmp_path, small_cfg):
    assert run("simulate", small_cfg, tmp_path) == EXIT_OK
    log = str(tmp_path / "events.jsonl")
    assert run("analyze", small_cfg, tmp_path / "a", "--set", f"log={json.dumps(log)}") == EXIT_OK
    assert run("analyze", small_cfg, tmp_path / "b") == EXIT_OK
    a = (tmp_path / "a" / "analyze.csv").read_text().splitlines()[1:]
    b = (tmp_path / "b" / "analyze.csv").read_text().splitlines()[1:]
    assert a == b


def test_hash_mismatch_is_a_data_error(tmp_path, small_cfg, capsys):
    assert run("simulate", small_cfg, tmp_path) == EXIT_OK
    log = json.dumps(str(tmp_path / "events.jsonl"))
    code = run("evaluate", small_cfg, tmp_path, "--set", f"log={log}", "--set", "seed=3")
    assert code == EXIT_DATA
    assert "hash mismatch" in capsys.readouterr().err


def test_missing_log_and_empty_log(tmp_path, small_cfg):
    assert run("analyze", small_cfg, tmp_path, "--set", 'log="nope.jsonl"') == EXIT_DATA
    assert run("analyze", small_cfg, tmp_path, "--set", "stream.events_per_day=0") == EXIT_DATA


def test_evaluate_grid(tmp_path):
    assert run("evaluate", CONFIGS / "default.json", tmp_path, "--threads", "4") == EXIT_OK
    header, rows = read_report(tmp_path / "evaluate.csv")
    assert len(rows) == 7 * 8
    cell = {(float(r["t_flex"]), r["method"]): r for r in rows}
    for t in range(2, 7):
        assert float(cell[(t, "P1D")]["calibration"]) < 1.0
        assert float(cell[(t, "P7D")]["calibration"]) > 1.0
        for m in ("INTERP_LINEAR", "INTERP_RATIONAL", "INTERP_EXP"):
            assert float(cell[(t, m)]["ne"]) <= float(cell[(t, "SEVEN_HEAD")]["ne"])
    for t in range(1, 8):
        assert float(cell[(t, "NDUB")]["delta_vs_ndub_pct"]) == 0.0


def test_recurring_report(tmp_path):
    assert run("recurring", CONFIGS / "default.json", tmp_path) == EXIT_OK
    _, rows = read_report(tmp_path / "recurring.csv")
    assert len(rows) == 7 * 7 * 3
    by_day_t = {}
    for r in rows:
        by_day_t.setdefault((r["train_day"], r["t_flex"]), []).append(r["gain_pct"])
    for (day, t), gains in by_day_t.items():
        assert len(gains) == 3
        if t in ("1", "7"):
            assert len(set(gains)) == 1
    inner = [float(r["gain_pct"]) for r in rows if r["t_flex"] not in ("1", "7")]
    assert np.median(inner) > 0


def test_sweep_beta_boundary(tmp_path, small_cfg, capsys):
    ok = ["--set", "sweep={\"linear\": [0, 0.16666666666666666]}"]
    assert run("sweep-beta", small_cfg, tmp_path, *ok) == EXIT_OK
    _, rows = read_report(tmp_path / "sweep_beta.csv")
    assert len(rows) == 2 * 7 and rows[0].keys() == {"family", "beta", "t_flex", "gain_pct"}
    bad = ["--set", "sweep={\"linear\": [0, 0.16666667]}"]
    assert run("sweep-beta", small_cfg, tmp_path, *bad) == EXIT_INFEASIBLE
    assert "0.16666667" in capsys.readouterr().err


def test_exit_codes(tmp_path, small_cfg):
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    assert run("evaluate", bad, tmp_path) == EXIT_CONFIG
    assert run("evaluate", small_cfg, tmp_path, "--set", "windows.t_flex_grid=[9]") == EXIT_CONFIG
    assert run("evaluate", small_cfg, tmp_path, "--threads", "0") == EXIT_CONFIG
    assert run("evaluate", small_cfg, tmp_path, "--set", "designs.linear.beta=0.5") == EXIT_INFEASIBLE
    assert run("evaluate", small_cfg, tmp_path, "--set", "schedule.train_days=[3]") == EXIT_DATA


def test_reports_are_byte_identical_across_runs_and_threads(tmp_path, small_cfg):
    for name, threads in (("a", "1"), ("b", "4")):
        assert run("evaluate", small_cfg, tmp_path / name, "--threads", threads) == EXIT_OK
    assert (tmp_path / "a" / "evaluate.csv").read_bytes() == (tmp_path / "b" / "evaluate.csv").read_bytes()


def test_six_significant_digits(tmp_path, small_cfg):
    assert run("evaluate", small_cfg, tmp_path) == EXIT_OK
    _, rows = read_report(tmp_path / "evaluate.csv")
    for r in rows:
        for col in ("ne", "calibration"):
            v = r[col]
            assert v == format(float(v), ".6g")
            assert len(v.replace(".", "").replace("-", "").lstrip("0")) <= 6


def test_console_script_entry_point(tmp_path, small_cfg):
    out = subprocess.run([sys.executable, "-m", "fow.cli", "simulate", "--config", small_cfg, "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip().endswith("events.jsonl")
    out = subprocess.run([sys.executable, "-m", "fow.cli", "bogus"], capture_output=True, text=True)
    assert out.returncode == 2
