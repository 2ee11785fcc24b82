import json

import pytest

from lipbandit.cli import main
from lipbandit.experiments import (ConfigError, config_from_mapping, emit_csv, list_presets, load_config,
                                   preset_config, read_csv, summary_table)


def test_list_presets(capsys):
    assert main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert len(out.strip().splitlines()) == len(list_presets()) == 8


def test_make_env_and_solve(tmp_path, capsys):
    arm = tmp_path / "arm.json"
    assert main(["make-env", "nonindexable", "--out", str(arm)]) == 0
    assert main(["solve", str(arm), "--dual", "--alpha", "0.3", "--out", str(tmp_path / "s")]) == 0
    res = json.loads((tmp_path / "s" / "result.json").read_text())
    assert res["lambda_star"] == pytest.approx(-0.694135, abs=1e-4)
    schema, rows = read_csv(tmp_path / "s" / "qtable.csv")
    assert schema == ["state", "q0", "q1", "gamma"] and len(rows) == 3
    assert (tmp_path / "s" / "qtable.csv").read_text().startswith("#")


def test_restart_index_cmd(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    types = [{"p": p, "w": w, "count": 25} for p, w in ((0.95, 0.9), (0.95, 0.2), (0.7, 0.95), (0.7, 0.2))]
    spec.write_text(json.dumps({"types": types, "alpha": 0.16}))
    assert main(["restart-index", str(spec), "--out", str(tmp_path / "r")]) == 0
    res = json.loads((tmp_path / "r" / "result.json").read_text())
    assert -12.1 <= res["lambda_star"] <= -11.1
    assert res["thresholds"] == [5, 11, 6, 13]


def test_exit_codes(tmp_path):
    assert main(["solve", str(tmp_path / "missing.json")]) == 4
    assert main(["bogus"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("task: learn-tabular\nunknown_key: 1\n")
    assert main(["learn-tabular", "--config", str(bad)]) == 2
    assert main(["run", "nope"]) == 2
    assert main(["list-presets", "--threads", "0"]) == 2


def test_small_run_writes_outputs(tmp_path):
    out = tmp_path / "run"
    rc = main(["learn-tabular", "--seed", "0", "--seed", "1", "--out", str(out),
               "--set", "steps=2000", "--set", "horizon=2000", "--set", "trace_every=100"])
    assert rc == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seeds"] == [0, 1] and man["format_version"] == 1
    summ = summary_table(out)
    assert "lip_budget_violations" in summ and summ["lip_budget_violations"] == 0
    assert (out / "seed-0").is_dir()


def test_replay_bit_identical(tmp_path):
    for k in (0, 1):
        assert main(["simulate", "--seed", "3", "--out", str(tmp_path / f"r{k}"), "--set", "horizon=3000"]) == 0
    a = sorted(p.relative_to(tmp_path / "r0") for p in (tmp_path / "r0").rglob("*.csv"))
    assert a
    for rel in a:
        assert (tmp_path / "r0" / rel).read_bytes() == (tmp_path / "r1" / rel).read_bytes()


def test_config_strict_and_presets(tmp_path):
    with pytest.raises(ConfigError):
        config_from_mapping({"task": "compare", "dqn": {"nope": 1}})
    with pytest.raises(ConfigError):
        config_from_mapping({"version": 2})
    with pytest.raises(ConfigError):
        config_from_mapping({"m": 10, "n": 10})
    cfg = preset_config("fig5-deadline-homog")
    assert cfg.n == 5 and cfg.m == 2 and cfg.dqn.eps_decay == 0.9995
    y = tmp_path / "c.yaml"
    y.write_text("preset: gap-curve\nseeds: [4]\n")
    cfg = load_config(y)
    assert cfg.task == "gap" and cfg.seeds == [4]
    assert cfg.digest() == load_config(y).digest()


def test_emit_csv_format():
    text = emit_csv([(1, 0.1 + 0.2)], ["a", "b"])
    lines = text.splitlines()
    assert lines[0].startswith("#") and lines[1] == "a,b" and lines[2] == "1,0.3"
