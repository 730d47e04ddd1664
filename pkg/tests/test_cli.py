import csv
import json
import shutil

import pytest

from fairdispatch import cli
from fairdispatch.config import CONFIG_SCHEMA, ConfigError, RunConfig

SMALL = {
    "geography": {"builtin": "dens", "arrival_rates": [4, 16]},
    "train": {"epochs": 6, "eval_days": 1},
    "pools": {"train_size": 3, "test_size": 3, "validation_size": 2},
}


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return str(p)


def run(*argv):
    return cli.main([str(a) for a in argv])


def snapshot(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_profiles_validate():
    for name in ("desk", "paper"):
        cfg = RunConfig.resolve(name)
        assert cfg.geography().n_regions == 2
    desk = RunConfig.resolve("desk")
    assert desk.fleet_size == 1 and desk.geography().expected_counts == (20.0, 80.0)
    assert desk.train_config().epochs == 20000 and desk.train_config().learning_rate == 3e-4
    paper = RunConfig.resolve("paper")
    assert paper.geography().expected_counts == (100.0, 400.0)
    assert paper.train_config().learning_rate == 1e-3
    assert paper.train_config().epochs == 200000 and paper.pools["train_size"] == 1500


def test_bad_configs_rejected(tmp_path):
    for bad in ({"fleet_size": 0}, {"train": {"alpha": 2}}, {"unknown": 1},
                {"geography": {"builtin": "nowhere"}}, {"train": {"reward_mode": "priority"}}):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(bad))
        with pytest.raises(ConfigError):
            RunConfig.resolve("desk", p)
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.resolve("desk", p)


def test_gen_writes_manifest_and_is_deterministic(tmp_path, small_config):
    assert run("gen", "--config", small_config, "--count", 3, "--seed", 42, "--out", tmp_path / "a") == 0
    first = snapshot(tmp_path / "a")
    shutil.rmtree(tmp_path / "a")
    assert run("gen", "--config", small_config, "--count", 3, "--seed", 42, "--out", tmp_path / "a") == 0
    assert snapshot(tmp_path / "a") == first
    with open(tmp_path / "a" / "manifest.csv") as f:
        rows = list(csv.DictReader(f))
    assert [int(r["seed"]) for r in rows] == [42, 43, 44]
    for r in rows:
        assert (tmp_path / "a" / r["file"]).exists()
    header = (tmp_path / "a" / rows[0]["file"]).read_text().splitlines()[0]
    assert header == "index,time_min,x_km,y_km,region,deadline_min"
    assert (tmp_path / "a" / "config.json").exists()


def test_gen_zero_count(tmp_path, small_config):
    assert run("gen", "--config", small_config, "--count", 0, "--out", tmp_path) == 0
    assert (tmp_path / "manifest.csv").read_text() == "file,seed\n"


def test_eval_reject_all_zero_utility(tmp_path, small_config):
    run("gen", "--config", small_config, "--count", 2, "--out", tmp_path / "g")
    code = run("eval", "--config", small_config, "--policy", "reject_all",
               "--manifest", tmp_path / "g" / "manifest.csv", "--out", tmp_path / "e")
    assert code == 0
    rep = json.loads((tmp_path / "e" / "eval_reject_all.json").read_text())
    assert rep["utility"] == 0.0 and rep["r_total"] == 0.0 and rep["days"] == 2


def test_train_then_eval_dql(tmp_path, small_config):
    run_dir = tmp_path / "run"
    assert run("train", "--config", small_config, "--out", run_dir) == 0
    names = {p.name for p in run_dir.iterdir()}
    assert {"config.json", "train_log.csv", "geography.json", "feature_schema.json"} <= names
    assert any(n.startswith("ckpt_") for n in names)
    snap = json.loads((run_dir / "config.json").read_text())
    assert snap["config"]["train"]["epochs"] == 6 and "numpy" in snap["versions"]
    assert run("eval", "--config", small_config, "--policy", f"dql:{run_dir}", "--out", run_dir, "--logs") == 0
    rep = json.loads((run_dir / "eval_dql.json").read_text())
    assert rep["days"] == 3 * 6  # six checkpoints, three test days each
    assert any((run_dir / "eval_dql_logs").iterdir())


def test_sweep_two_rows(tmp_path, small_config):
    assert run("sweep", "--config", small_config, "--alphas", "0,0.5", "--out", tmp_path) == 0
    lines = (tmp_path / "pareto.csv").read_text().splitlines()
    assert lines[0] == "alpha,r_total,r_min,utility,dominated"
    assert [l.split(",")[0] for l in lines[1:]] == ["0", "0.5"]


def test_small_commands_and_determinism(tmp_path, small_config):
    cmds = [
        ["gen", "--count", 2],
        ["train"],
        ["eval", "--policy", "myopic", "--logs"],
        ["eval", "--policy", "bucket:0.5"],
        ["sweep", "--alphas", "0"],
        ["bucket-search", "--start", 0.5, "--step", 0.1],
        ["longterm", "--months", 2, "--days-per-month", 2],
        ["reward-profile", "--days", 3],
    ]
    for i, argv in enumerate(cmds):
        d = tmp_path / str(i)
        outs = []
        for _ in range(2):
            shutil.rmtree(d, ignore_errors=True)
            assert run(*argv, "--config", small_config, "--out", d) == 0, argv
            outs.append(snapshot(d))
        assert outs[0] == outs[1], argv


def test_exit_codes(tmp_path, small_config, capsys):
    assert run("eval", "--config", small_config, "--policy", "nonsense", "--out", tmp_path) == 2
    assert run("eval", "--config", small_config, "--policy", "reserved:1", "--out", tmp_path) == 2
    assert run("eval", "--config", tmp_path / "missing.json", "--policy", "myopic") == 2
    assert run("eval", "--config", small_config, "--policy", f"dql:{tmp_path}", "--out", tmp_path) == 2
    assert run("gen", "--config", small_config, "--count", -1, "--out", tmp_path) == 2
    assert run("sweep", "--config", small_config, "--alphas", "2", "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert "error:" in err


def test_contract_violation_exit_code(tmp_path, small_config, monkeypatch):
    from fairdispatch.env import InfeasibleActionError

    def boom(*a, **k):
        raise InfeasibleActionError("action 2 infeasible")

    monkeypatch.setattr(cli.evaluation, "run_pool", boom)
    assert run("eval", "--config", small_config, "--policy", "myopic", "--out", tmp_path) == 3


def test_schema_command(tmp_path, capsys):
    assert run("schema") == 0
    assert json.loads(capsys.readouterr().out) == CONFIG_SCHEMA
    assert run("schema", "--out", tmp_path / "s.json") == 0
    assert json.loads((tmp_path / "s.json").read_text()) == CONFIG_SCHEMA


def test_published_schema_is_current():
    from pathlib import Path
    published = Path(__file__).parent.parent / "docs" / "config.schema.json"
    assert json.loads(published.read_text()) == CONFIG_SCHEMA
