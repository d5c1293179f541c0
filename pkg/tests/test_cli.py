import json
from pathlib import Path

import numpy as np
import pytest

import trigame as tg
from trigame.cli import (emit_plot, load_config, main, parse_config,
                         run_pipeline, write_csv)


@pytest.fixture(scope="module")
def bench_raw():
    return json.loads(Path(tg.benchmark_config_path()).read_text())


def _dump(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


def test_bundled_config_loads_and_hash_stable(bench_raw, tmp_path):
    p1 = _dump(tmp_path, bench_raw, "a.json")
    p2 = _dump(tmp_path, bench_raw, "b.json")
    c1 = load_config(p1)
    c2 = load_config(p2)
    assert c1.config_hash() == c2.config_hash()
    assert tg.validate_problem(c1.spec).passed
    assert c1.N == 40


def test_missing_terminal_eta_named(bench_raw, tmp_path):
    raw = json.loads(json.dumps(bench_raw))
    del raw["terminal"]["eta"]
    with pytest.raises(tg.ConfigError, match="terminal.eta"):
        load_config(_dump(tmp_path, raw))


def test_nonpositive_gamma_rejected(bench_raw, tmp_path):
    raw = json.loads(json.dumps(bench_raw))
    raw["problem"]["gamma"] = 0.0
    with pytest.raises(tg.ConfigError, match="positive"):
        load_config(_dump(tmp_path, raw))


def test_unknown_key_rejected_with_path(bench_raw, tmp_path):
    raw = json.loads(json.dumps(bench_raw))
    raw["grid"]["Nsteps"] = 10
    with pytest.raises(tg.ConfigError, match="grid.Nsteps"):
        load_config(_dump(tmp_path, raw))


def test_parse_error_reports_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"problem": }')
    with pytest.raises(tg.ConfigError, match="line 1"):
        load_config(p)


def test_complex_terminal_entries(bench_raw, tmp_path):
    raw = json.loads(json.dumps(bench_raw))
    raw["terminal"]["eta"][0][0] = [5.0, -0.5]
    cfg = load_config(_dump(tmp_path, raw))
    assert cfg.terminal_eta[0][0][0, 0] == 5.0 - 0.5j


def test_problem_as_file_path(bench_raw, tmp_path):
    raw = json.loads(json.dumps(bench_raw))
    prob = tmp_path / "problem.json"
    prob.write_text(json.dumps(raw["problem"]))
    raw["problem"] = "problem.json"
    cfg = load_config(_dump(tmp_path, raw, "split.json"))
    assert tg.validate_problem(cfg.spec).passed


def test_solve_stage_emits_solver_csvs_only(bench_raw, tmp_path):
    cfg = parse_config(bench_raw)
    out = tmp_path / "solve_only"
    manifest = run_pipeline(cfg, stages={"validate", "solve"}, out_dir=out)
    names = set(manifest.files)
    assert names == {"p_path.csv", "gains.csv", "disturbance_gain.csv"}
    header = (out / "gains.csv").read_text().splitlines()[0]
    assert "u_2_1_3_gain" in header
    assert "u_3_1_2_gain" in header


def test_gamma_sweep_monotone(bench_raw, tmp_path):
    cfg = parse_config(bench_raw)
    cfg.gamma_sweep = [1.0, 10.0, 100.0]
    out = tmp_path / "sweep"
    manifest = run_pipeline(cfg, stages={"validate", "solve", "sweep"},
                            out_dir=out)
    sups = manifest.summaries["gamma_sweep"]["sup_disturbance_gain"]
    assert manifest.summaries["gamma_sweep"]["strictly_decreasing"]
    assert sups["1.0"] > sups["10.0"] > sups["100.0"]
    assert "gamma_sweep.csv" in manifest.files


def test_emit_plot_constant_series(tmp_path):
    p = tmp_path / "c.svg"
    emit_plot([("flat", [0, 1, 2], [1.0, 1.0, 1.0])], "value", p)
    content = p.read_text()
    assert "<svg" in content


def test_emit_plot_empty_errors(tmp_path):
    p = tmp_path / "never.svg"
    with pytest.raises(tg.TrigameError):
        emit_plot([], "value", p)
    assert not p.exists()


def test_emit_plot_deterministic(tmp_path):
    series = [("a", np.linspace(0, 1, 40), np.sin(np.linspace(0, 6, 40)))]
    p1, p2 = tmp_path / "p1.svg", tmp_path / "p2.svg"
    emit_plot(series, "amplitude", p1)
    emit_plot(series, "amplitude", p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_csv_uses_full_precision(tmp_path):
    p = tmp_path / "x.csv"
    write_csv(p, ["a"], [[1.0 / 3.0]])
    text = p.read_text().splitlines()[1]
    assert float(text) == 1.0 / 3.0


def test_main_exit_codes(tmp_path, bench_raw, capsys):
    bad = tmp_path / "missing.json"
    assert main(["validate", "--config", str(bad)]) == 2

    raw = json.loads(json.dumps(bench_raw))
    raw["problem"]["gamma"] = -1.0
    p = _dump(tmp_path, raw)
    assert main(["validate", "--config", str(p)]) == 2

    good = _dump(tmp_path, bench_raw, "good.json")
    out = tmp_path / "run"
    assert main(["validate", "--config", str(good), "--out", str(out)]) == 0

    # infeasible attenuation level: solver divergence surfaces as exit 3
    raw = json.loads(json.dumps(bench_raw))
    raw["problem"]["gamma"] = 0.05
    p = _dump(tmp_path, raw, "tight.json")
    assert main(["solve", "--config", str(p), "--out", str(tmp_path / "r3")]) == 3


def test_gamma_list_flag_validation(tmp_path, bench_raw):
    good = _dump(tmp_path, bench_raw, "ok.json")
    rc = main(["sweep", "--config", str(good), "--out",
               str(tmp_path / "neg"), "--gamma-list", "1,-2"])
    assert rc == 2


def test_manifest_partial_completion(bench_raw, tmp_path):
    raw = json.loads(json.dumps(bench_raw))
    raw["problem"]["gamma"] = 0.05
    cfg = parse_config(raw)
    out = tmp_path / "partial"
    with pytest.raises(tg.DivergenceError):
        run_pipeline(cfg, stages={"validate", "solve"}, out_dir=out)
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["completed_stages"] == ["validate"]


def test_refined_simulation_grid(bench_raw, tmp_path):
    raw = json.loads(json.dumps(bench_raw))
    raw["grid"]["refinement"] = 2
    raw["mc"]["n_paths"] = 200
    cfg = parse_config(raw)
    out = tmp_path / "refined"
    run_pipeline(cfg, stages={"validate", "solve", "incentive", "simulate"},
                 out_dir=out)
    rows = (out / "trajectories.csv").read_text().splitlines()
    assert len(rows) == 1 + (2 * cfg.N + 1)   # header + refined nodes
