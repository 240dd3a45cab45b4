import csv
import json

import pytest

from accelcut import builtin_cuts, cli, problems
from accelcut.config import ConfigError, RunConfig

MCND_CFG = {
    "version": 1, "problem": "mcnd",
    "generator": {"nodes": 10, "arcs": 30, "commodities": 8},
    "eval_generator": {"nodes": 12, "arcs": 40, "commodities": 10},
    "test_generator": {"nodes": 12, "arcs": 40, "commodities": 10},
    "n_eval": 2, "n_verify": 2, "n_test": 2, "n_spare": 2,
    "budgets": {"eval": {"wall_seconds": 60, "node_limit": 1}, "preprocess_long": {"wall_seconds": 120},
                "osp_long": {"wall_seconds": 120}},
    "ga": {"T": 1, "mu": 4},
    "seed": 42,
}


def write_cfg(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def err_json(err):
    return json.loads(err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def evolved(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = write_cfg(base / "cfg.json", {**MCND_CFG, "output_dir": str(base / "run")})
    assert cli.main(["prep", "--config", cfg]) == 0
    assert cli.main(["evolve", "--config", cfg]) == 0
    return base, cfg


# -- config --------------------------------------------------------------

def test_config_defaults():
    cfg = RunConfig.from_dict({"version": 1, "problem": "tsp"})
    ga = cfg.ga()
    assert (ga.T, ga.mu, ga.P_c, ga.P_m, ga.r_e, ga.max_retries) == (20, 8, 0.7, 0.3, 0.2, 3)
    assert cfg["n_eval"] == 10 and cfg["n_verify"] == 2
    assert cfg.size_for("eval") == {"n": 8}


@pytest.mark.parametrize("obj", [
    {"problem": "tsp"},
    {"version": 2, "problem": "tsp"},
    {"version": 1, "problem": "knapsack"},
    {"version": 1, "problem": "tsp", "ga": {"mu": 1}},
    {"version": 1, "problem": "tsp", "ga": {"P_c": 0.9, "P_m": 0.9}},
    {"version": 1, "problem": "tsp", "typo": 1},
    {"version": 1, "problem": "tsp", "budgets": {"eval": {"wall_seconds": 0}}},
])
def test_config_rejected(obj):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(obj)


def test_seed_streams_disjoint():
    cfg = RunConfig.from_dict({"version": 1, "problem": "tsp", "seed": 7})
    pools = {r: set(cfg.instance_seeds(r, 20)) for r in ("eval", "verify", "spare", "test")}
    for a in pools:
        for b in pools:
            if a < b:
                assert not pools[a] & pools[b]
    assert cfg.stream_seed("ga") != cfg.stream_seed("agents")
    assert cfg.instance_seeds("eval", 3) == RunConfig.from_dict({"version": 1, "problem": "tsp",
                                                                 "seed": 7}).instance_seeds("eval", 3)


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", {"version": 1})
    code, _, err = run(["prep", "--config", cfg], capsys)
    assert code == 2 and err_json(err)["exit_code"] == 2
    code, _, err = run(["prep", "--config", str(tmp_path / "missing.json")], capsys)
    assert code == 2
    (tmp_path / "broken.json").write_text("{")
    assert run(["prep", "--config", str(tmp_path / "broken.json")], capsys)[0] == 2


def test_unknown_flag_is_config_error(capsys):
    code, _, err = run(["gen", "--bogus"], capsys)
    assert code == 2 and "error" in err_json(err)


# -- gen -----------------------------------------------------------------

def test_gen_native_and_tsplib(tmp_path, capsys):
    code, out, _ = run(["gen", "--problem", "tsp", "--size", "n=6", "--count", "2", "--out", str(tmp_path)], capsys)
    assert code == 0
    paths = json.loads(out)["written"]
    assert len(paths) == 2
    inst = problems.read_instance(paths[0])
    assert inst.kind == "tsp" and inst.payload.n == 6
    code, out, _ = run(["gen", "--problem", "tsp", "--size", "n=5", "--format", "tsplib-euc2d",
                        "--out", str(tmp_path / "t")], capsys)
    assert code == 0 and json.loads(out)["written"][0].endswith(".tsp")
    assert "EUC_2D" in (tmp_path / "t").joinpath(json.loads(out)["written"][0].split("/")[-1]).read_text()


def test_gen_errors(tmp_path, capsys):
    assert run(["gen", "--problem", "cwlp", "--format", "tsplib-euc2d", "--out", str(tmp_path)], capsys)[0] == 2
    assert run(["gen", "--problem", "tsp", "--size", "n", "--out", str(tmp_path)], capsys)[0] == 2
    assert run(["gen", "--out", str(tmp_path)], capsys)[0] == 2


def test_gen_from_config_is_deterministic(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", {"version": 1, "problem": "jssp"})
    run(["gen", "--config", cfg, "--count", "2", "--out", str(tmp_path / "a")], capsys)
    run(["gen", "--config", cfg, "--count", "2", "--out", str(tmp_path / "b")], capsys)
    a = sorted(p.read_text() for p in (tmp_path / "a").iterdir())
    b = sorted(p.read_text() for p in (tmp_path / "b").iterdir())
    assert a == b and len(a) == 2


# -- prep / evolve -------------------------------------------------------

def test_prep_artifacts(evolved):
    base, _ = evolved
    prep = base / "run" / "prep"
    for name in ("eval_set.json", "verification_set.json", "config.json", "events.jsonl"):
        assert (prep / name).exists()


def test_evolve_outputs(evolved):
    base, _ = evolved
    rd = base / "run"
    meta = json.loads((rd / "run.json").read_text())
    assert meta["n_eval"] == 2 and meta["n_verify"] == 2 and meta["problem"] == "mcnd"
    assert (rd / "best.cut").exists() and (rd / "stats.csv").exists()
    assert sorted(p.name for p in rd.glob("gen_*")) == ["gen_0000", "gen_0001"]


def test_evolve_refuses_existing_run(evolved, capsys):
    _, cfg = evolved
    code, _, err = run(["evolve", "--config", cfg], capsys)
    assert code == 2 and "--resume" in err_json(err)["message"]


def test_evolve_resume_finished_run_is_noop(evolved, capsys):
    base, cfg = evolved
    before = (base / "run" / "best.json").read_text()
    code, out, _ = run(["evolve", "--config", cfg, "--resume"], capsys)
    assert code == 0 and json.loads(out)["resumed"] is True
    assert (base / "run" / "best.json").read_text() == before


def test_evolve_without_prep(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", {**MCND_CFG, "output_dir": str(tmp_path / "r")})
    code, _, err = run(["evolve", "--config", cfg], capsys)
    assert code == 3 and err_json(err)["exit_code"] == 3


def test_evolve_more_instances_than_prepared(evolved, tmp_path, capsys):
    base, cfg = evolved
    code, _, _ = run(["evolve", "--config", cfg, "--run-dir", str(tmp_path / "r"), "--n-eval", "5"], capsys)
    assert code == 2


def test_evolve_size_choices(evolved, capsys):
    _, cfg = evolved
    assert run(["evolve", "--config", cfg, "--n-eval", "3"], capsys)[0] == 2


# -- verify --------------------------------------------------------------

def test_verify_best_cut(evolved, capsys):
    base, cfg = evolved
    code, out, _ = run(["verify", str(base / "run" / "best.cut"), "--config", cfg], capsys)
    assert code == 0 and json.loads(out)["passed"] is True


def test_verify_failure_exit_code(evolved, tmp_path, capsys):
    _, cfg = evolved
    slack = tmp_path / "slack.cut"
    slack.write_text("0 * y[1, 2] <= 1;\n")
    code, out, err = run(["verify", str(slack), "--config", cfg], capsys)
    assert code == 5
    assert err_json(err)["stage"] in ("useful", "code")
    broken = tmp_path / "broken.cut"
    broken.write_text("forall k in K: y[")
    code, out, err = run(["verify", str(broken), "--config", cfg], capsys)
    assert code == 5 and err_json(err)["stage"] == "code"


def test_verify_missing_files(evolved, tmp_path, capsys):
    _, cfg = evolved
    assert run(["verify", str(tmp_path / "none.cut"), "--config", cfg], capsys)[0] == 3
    assert run(["verify", "x.cut", "--verification-set", str(tmp_path / "no.json")], capsys)[0] == 3


def test_verify_builtin_jssp(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", {"version": 1, "problem": "jssp", "output_dir": str(tmp_path / "r"),
                                          "n_eval": 1, "n_verify": 2,
                                          "budgets": {"eval": {"wall_seconds": 5, "node_limit": 1}}})
    assert cli.main(["prep", "--config", cfg]) == 0
    capsys.readouterr()
    code, out, _ = run(["verify", str(builtin_cuts.builtin_cut_path("jssp")), "--config", cfg], capsys)
    assert code == 0
    assert [s["passed"] for s in json.loads(out)["stages"]] == [True, True, True]


# -- eval / report -------------------------------------------------------

def test_eval_empty_cut(evolved, tmp_path, capsys):
    _, cfg = evolved
    code, out, _ = run(["eval", "none", "--config", cfg, "--out", str(tmp_path / "e")], capsys)
    assert code == 0
    summ = json.loads((tmp_path / "e" / "summary.json").read_text())
    for agg in summ["gap_improvement"]:
        assert agg["n"] == 0 or abs(agg["mean"]) <= 1e-12
    assert summ["fit"] == 10.0


def test_eval_unreadable_cut(evolved, tmp_path, capsys):
    _, cfg = evolved
    bad = tmp_path / "bad.cut"
    bad.write_text("sum(j in J: y[j]) >= 1;")  # symbols of another problem
    assert run(["eval", str(bad), "--config", cfg], capsys)[0] == 5


def test_eval_and_report(evolved, capsys):
    base, cfg = evolved
    rd = base / "run"
    code, out, _ = run(["eval", str(rd / "best.cut"), "--config", cfg, "--osp", "--plot-data",
                        "--out", str(rd / "eval")], capsys)
    assert code == 0 and json.loads(out)["osp_rate"] == 100.0
    assert (rd / "eval" / "osp.json").exists() and any((rd / "eval" / "plot_data").iterdir())
    code, out, _ = run(["report", str(rd), "--out", str(base / "report")], capsys)
    assert code == 0
    tables = {p.stem: list(csv.reader(p.read_text().splitlines())) for p in (base / "report").glob("*.csv")}
    assert set(tables) == {"gap_improvement", "time_saving", "agent_stats", "sensitivity"}
    assert tables["gap_improvement"][0] == ["run", "problem", "budget_s", "t=1s", "t=2s", "t=10s",
                                            "t=30s", "t=60s"]
    assert tables["sensitivity"][1][1:3] == ["2", "2"]
    assert tables["agent_stats"][0][1:] == list(cli.evolution.STAT_COLUMNS)


def test_report_missing_eval(tmp_path, capsys):
    (tmp_path / "r").mkdir()
    (tmp_path / "r" / "run.json").write_text("{}")
    assert run(["report", str(tmp_path / "r"), "--out", str(tmp_path / "o")], capsys)[0] == 3
