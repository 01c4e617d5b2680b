import csv
import textwrap

import pytest

from nsrlsvi.cli import main
from nsrlsvi.harness import (METRICS_HEADER, ConfigError, RunConfig, execute, expand_seeds,
                             fixture_path, load_config, parse_config, sweep, verify_report)


def write_cfg(tmp_path, body, name="run.cfg"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(body), encoding="utf-8")
    return p


def test_parse_typed_fields(tmp_path):
    cfg = parse_config("env = tabular\nT = 7  # rounds\nknown_reward = yes\nscale_override = 1e-3\n",
                       tmp_path)
    assert cfg.T == 7 and cfg.known_reward is True and cfg.scale_override == 1e-3
    assert cfg.env.endswith("tabular.json")


@pytest.mark.parametrize("text,field,line", [
    ("env = tabular\nT = seven\n", "T", 2),
    ("env = tabular\n\nbogus = 1\n", "bogus", 3),
    ("env = tabular\noracle = magic\n", "oracle", 2),
    ("env = tabular\nT = 1\nT = 2\n", "T", 3),
    ("env = tabular\nknown_reward = maybe\n", "known_reward", 2),
])
def test_parse_errors_name_field_and_line(tmp_path, text, field, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text, tmp_path)
    assert info.value.field_name == field and info.value.line == line
    assert f"line {line}" in str(info.value)


def test_missing_env_and_bad_line(tmp_path):
    with pytest.raises(ConfigError, match="env"):
        parse_config("T = 3\n", tmp_path)
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("just words\n", tmp_path)


def test_zero_rounds_header_only(tmp_path):
    cfg = write_cfg(tmp_path, f"env = tabular\nT = 0\noutput = {tmp_path / 'out'}\n")
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "out" / "metrics.csv").read_text() == METRICS_HEADER + "\n"


def test_run_twice_byte_identical(tmp_path):
    outs = []
    for i in range(2):
        cfg = write_cfg(tmp_path, f"env = tabular\nT = 500\nseed = 1\noutput = {tmp_path / str(i)}\n")
        assert main(["run", str(cfg)]) == 0
        outs.append((tmp_path / str(i) / "metrics.csv").read_bytes())
    assert outs[0] == outs[1]
    rows = list(csv.DictReader(outs[0].decode().splitlines()))
    assert len(rows) == 500
    cum = [float(r["regret_cum"]) for r in rows]
    assert all(b >= a for a, b in zip(cum, cum[1:]))


def test_run_writes_all_files(tmp_path):
    cfg = load_config(fixture_path("tabular.cfg"))
    cfg.output, cfg.T, cfg.timing = str(tmp_path), 20, True
    res = execute(cfg)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"metrics.csv", "summary.txt", "schedule.txt", "timing.csv"} <= names
    assert "budget dH = 8" in (tmp_path / "summary.txt").read_text()
    assert res.ok


def test_seed_env_override(tmp_path, monkeypatch):
    cfg = RunConfig(env=str(fixture_path("tabular.json")), T=30, seed=1, output=str(tmp_path / "a"))
    monkeypatch.setenv("NSRLSVI_SEED", "9")
    a = execute(cfg)
    cfg2 = RunConfig(env=cfg.env, T=30, seed=9, output=str(tmp_path / "b"))
    monkeypatch.delenv("NSRLSVI_SEED")
    b = execute(cfg2)
    assert a.config.seed == 9
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_exploration_beats_greedy(tmp_path):
    algo = load_config(fixture_path("hidden_reward.cfg"))
    greedy = load_config(fixture_path("hidden_reward_greedy.cfg"))
    algo.output, greedy.output = str(tmp_path / "a"), str(tmp_path / "g")
    assert execute(algo).regret < execute(greedy).regret


def test_sweep_rows_and_aggregates(tmp_path):
    base = RunConfig(env=str(fixture_path("tabular.json")), T=25, name="tab")
    runs = expand_seeds([base], list(range(1, 11)), tmp_path)
    rep = sweep(runs, parallelism=2, output=tmp_path)
    assert rep.ok
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 1 + 10 * 25
    assert lines[0].endswith("mean_regret_cum,stderr_regret_cum")


def test_sweep_empty_and_failures(tmp_path):
    assert main(["sweep", "--output", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "sweep.csv").read_text().count("\n") == 1
    good = RunConfig(env=str(fixture_path("tabular.json")), T=5, name="good")
    bad = RunConfig(env=str(tmp_path / "missing.json"), T=5, name="bad")
    rep = sweep(expand_seeds([bad, good], None, tmp_path), output=tmp_path)
    assert not rep.ok and rep.failures[0][0] == "bad" and "good" in rep.optimism


def test_verify_reports():
    lines, _ = verify_report(fixture_path("tabular.json"))
    assert "LBC exact (max residual <= 1e-9), gamma = 1, d = 4" in lines
    lines, _ = verify_report(fixture_path("lqr.json"))
    assert any(l.startswith("LBC residual <= 1e-6") and l.endswith("d = 8") for l in lines)
    assert any(l.startswith("R_feat") for l in lines)
    assert any("g(rho)" in l for l in lines)


def test_verify_rejects_rewards_above_one(tmp_path, capsys):
    import json
    spec = json.loads(fixture_path("tabular.json").read_text())
    spec["rewards"] = [[[2 * v for v in row] for row in layer] for layer in spec["rewards"]]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(spec))
    assert main(["verify-env", str(p)]) == 2
    assert "[0,1]" in capsys.readouterr().err


def test_design_command(tmp_path, capsys):
    out = tmp_path / "design.json"
    assert main(["design", "tabular", "--output", str(out)]) == 0
    assert out.exists() and "g(rho) = 4" in capsys.readouterr().out


def test_reward_noise_field(tmp_path):
    assert parse_config("env = tabular\nreward_noise = none\n", tmp_path).reward_noise == "none"
    assert parse_config("env = tabular\nreward_noise = default\n", tmp_path).reward_noise is None
