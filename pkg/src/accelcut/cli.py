"""Command-line entry point: ``accelcut {gen,prep,evolve,verify,eval,report}``.

Exit codes: 0 success, 2 bad configuration or arguments, 3 missing or
corrupt artifact, 4 solver infrastructure failure, 5 cut failed
verification, 1 the search could not proceed.  Errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import agents, dsl, evaluation, evolution, problems, solver, verification
from .config import ConfigError, RunConfig
from .events import EventLog
from .problems.io import NATIVE, TSPLIB_EUC2D, atomic_write_text, write_tsplib_euc2d

log = logging.getLogger("accelcut")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ARTIFACT = 3
EXIT_SOLVER = 4
EXIT_VERIFY = 5
# the search itself could not proceed (agent corpus exhausted, stalled population)
EXIT_SEARCH = 1

SENSITIVITY_SIZES = (2, 5, 10)


class CliError(Exception):
    def __init__(self, code: int, message: str, **detail):
        super().__init__(message)
        self.code = code
        self.detail = detail


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_CONFIG, message)


# ---------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------

def _load_config(path) -> RunConfig:
    if path is None:
        raise CliError(EXIT_CONFIG, "--config is required")
    return RunConfig.load(path)


def _parse_size(items) -> dict:
    out = {}
    for it in items or ():
        key, sep, val = it.partition("=")
        if not sep:
            raise CliError(EXIT_CONFIG, f"size must look like key=value, got {it!r}")
        try:
            out[key] = int(val)
        except ValueError:
            raise CliError(EXIT_CONFIG, f"size value for {key} must be an integer") from None
    return out


def _pool(cfg: RunConfig, role: str, count: int) -> list:
    size = cfg.size_for(role)
    return [problems.generate(cfg.problem, size, s) for s in cfg.instance_seeds(role, count)]


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError(EXIT_ARTIFACT, f"{what} not found: {path}", path=str(path))
    return path


def _read_json(path: Path, what: str):
    _require(path, what)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_ARTIFACT, f"{what} is not valid JSON: {exc}", path=str(path)) from None


def _prep_dir(args, cfg) -> Path:
    return Path(args.prep_dir) if args.prep_dir else Path(cfg["output_dir"]) / "prep"


def _run_dir(args, cfg) -> Path:
    return Path(args.run_dir) if args.run_dir else Path(cfg["output_dir"])


def _load_sets(prep: Path, n_eval=None, n_verify=None):
    es_path = _require(prep / "eval_set.json", "evaluation set")
    vs_path = _require(prep / "verification_set.json", "verification set")
    try:
        es = evaluation.EvalSet.load(es_path)
        vs = verification.VerificationSet.load(vs_path)
    except verification.CorruptArtifact as exc:
        raise CliError(EXIT_ARTIFACT, str(exc), path=str(vs_path)) from None
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_ARTIFACT, f"malformed preprocessing artifact: {exc}", path=str(prep)) from None
    for n, have, what in ((n_eval, len(es.entries), "evaluation"), (n_verify, len(vs.entries), "verification")):
        if n is not None and n > have:
            raise CliError(EXIT_CONFIG, f"requested {n} {what} instances but {prep} holds only {have}")
    if n_eval is not None:
        es = evaluation.EvalSet(es.entries[:n_eval], es.budget, es.gap_cap)
    if n_verify is not None:
        vs = verification.VerificationSet(vs.entries[:n_verify])
    return es, vs


def _read_cut(path) -> dsl.CutFamily:
    p = _require(Path(path), "cut file")
    try:
        return dsl.parse(p.read_text())
    except dsl.ParseError as exc:
        raise CliError(EXIT_VERIFY, f"cut does not parse: {exc}", stage=verification.CODE) from None


def _make_agent(cfg: RunConfig):
    spec = cfg["agent"]
    if spec.get("backend", "mock") == "mock":
        return agents.MockAgent(cfg.problem)
    if "endpoint" not in spec:
        raise CliError(EXIT_CONFIG, "agent.endpoint is required for the remote backend")
    try:
        return agents.RemoteAgent(agents.ChatEndpointConfig(**spec["endpoint"]))
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"agent endpoint: {exc}") from None


def _test_instances(args, cfg) -> list:
    if args.instances:
        d = _require(Path(args.instances), "instance directory")
        files = sorted(d.glob("*.json")) if d.is_dir() else [d]
        if not files:
            raise CliError(EXIT_ARTIFACT, f"no instance files in {d}")
        return [problems.read_instance(f) for f in files]
    return _pool(cfg, "test", cfg["n_test"])


# ---------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.config:
        cfg = _load_config(args.config)
        kind = cfg.problem
        size = _parse_size(args.size) or cfg.size_for(args.role)
        seeds = cfg.instance_seeds(args.role, args.count)
    else:
        if not args.problem:
            raise CliError(EXIT_CONFIG, "give --problem (or --config)")
        kind = args.problem
        size = _parse_size(args.size)
        seeds = [args.seed + k for k in range(args.count)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == TSPLIB_EUC2D and kind != "tsp":
        raise CliError(EXIT_CONFIG, "TSPLIB output is only available for tsp")
    written = []
    for k, s in enumerate(seeds):
        try:
            inst = problems.generate(kind, size, s)
        except problems.ProblemError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
        if args.format == TSPLIB_EUC2D:
            path = out / f"{kind}_{k:03d}_s{s}.tsp"
            atomic_write_text(path, write_tsplib_euc2d(inst, path.stem))
        else:
            path = out / f"{kind}_{k:03d}_s{s}.json"
            problems.write_instance(inst, path)
        written.append(str(path))
    print(json.dumps({"written": written}))
    return EXIT_OK


def cmd_prep(args) -> int:
    cfg = _load_config(args.config)
    out = _prep_dir(args, cfg)
    ev = EventLog(out / "events.jsonl")
    es, vs = evaluation.preprocess(
        _pool(cfg, "eval", cfg["n_eval"]), _pool(cfg, "verify", cfg["n_verify"]),
        cfg.eval_budget(), cfg.long_budget(), seed=cfg["seed"],
        out_dir=out, spares=_pool(cfg, "spare", cfg["n_spare"]), gap_cap=cfg["gap_cap"], log_events=ev)
    atomic_write_text(out / "config.json", json.dumps(cfg.to_json(), indent=1))
    ev.emit("prep_done", n_eval=len(es.entries), n_verify=len(vs.entries),
            verify=[e.name for e in vs.entries])
    print(json.dumps({"prep_dir": str(out), "n_eval": len(es.entries), "n_verify": len(vs.entries),
                      "gap_ref": [e.gap_ref for e in es.entries]}))
    return EXIT_OK


def cmd_evolve(args) -> int:
    cfg = _load_config(args.config)
    n_eval = args.n_eval or cfg["n_eval"]
    n_verify = args.n_verify or cfg["n_verify"]
    es, vs = _load_sets(_prep_dir(args, cfg), n_eval, n_verify)
    run_dir = _run_dir(args, cfg)
    if not args.resume and run_dir.exists() and any(run_dir.glob("gen_*")):
        raise CliError(EXIT_CONFIG, f"{run_dir} already holds a run; pass --resume or choose another --run-dir")
    inst0 = vs.entries[0].instance
    prob = evolution.Problem(cfg.problem, problems.describe(cfg.problem),
                             problems.symbol_table(inst0).listing())
    ga = cfg.ga()
    if args.generations is not None:
        ga = evolution.GaConfig(**{**ga.to_json(), "T": args.generations})
    evo = evolution.Evolution(ga, _make_agent(cfg), prob, vs, es, run_dir,
                              eval_seed=cfg["seed"], workers=cfg["workers"])
    resumed = args.resume and run_dir.exists() and evo.last_completed() is not None
    pop = evo.run(resume=args.resume)
    evo.write_run_json({"n_eval": len(es.entries), "n_verify": len(vs.entries), "config": cfg.to_json()})
    best = sorted(pop, key=evolution.Individual.sort_key)[0]
    atomic_write_text(run_dir / "best.cut", best.source)
    atomic_write_text(run_dir / "best.json", json.dumps(best.to_json(), indent=1))
    print(json.dumps({"run_dir": str(run_dir), "resumed": bool(resumed), "generation": evo.generation,
                      "best": {"family_id": best.family_id, "fit": best.fit}}))
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.verification_set:
        vs_path = Path(args.verification_set)
    else:
        cfg = _load_config(args.config)
        vs_path = _prep_dir(args, cfg) / "verification_set.json"
    _require(vs_path, "verification set")
    try:
        vs = verification.VerificationSet.load(vs_path)
    except verification.CorruptArtifact as exc:
        raise CliError(EXIT_ARTIFACT, str(exc), path=str(vs_path)) from None
    source = _require(Path(args.cut), "cut file").read_text()
    rec, _ = verification.verify_once(source, vs, args.probe_cap)
    print(json.dumps(rec.to_json(), indent=1))
    if not rec.passed:
        f = rec.failure
        raise CliError(EXIT_VERIFY, f.message, stage=f.stage, instance=f.instance)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    cut = None if args.cut == "none" else _read_cut(args.cut)
    insts = _test_instances(args, cfg)
    try:
        for inst in insts:
            evaluation.cut_rows(cut, inst)
    except (dsl.EvalError, dsl.CheckFailed) as exc:
        raise CliError(EXIT_VERIFY, f"cut does not instantiate: {exc}", stage=verification.CODE) from None
    budget = cfg.eval_budget()
    if args.budget is not None:
        budget = solver.SolveBudget(args.budget, budget.node_limit, budget.gap_target)
    seed = cfg["seed"]
    report = evaluation.evaluate_cut(cut, insts, budget, seed, cfg["workers"], gap_cap=cfg["gap_cap"])
    out = Path(args.out) if args.out else Path(cfg["output_dir"]) / "eval"
    outcomes = None
    if args.osp:
        report.osp_rate, outcomes = evaluation.osp_rate(cut, insts, cfg.osp_budget(), seed, cfg["workers"])
    report.write(out, plot_data=args.plot_data)
    if outcomes is not None:
        atomic_write_text(out / "osp.json", json.dumps([o.__dict__ for o in outcomes], indent=1))
    summ = report.summary()
    print(json.dumps({"out": str(out), "osp_rate": summ["osp_rate"], "fit": summ["fit"],
                      "final_gap_improvement": summ["gap_improvement"][-1]}))
    return EXIT_OK


def _pm(agg) -> str:
    if agg is None or agg.get("n", 0) == 0:
        return "n/a"
    return f"{agg['mean']:.4f} +- {agg['std']:.4f}"


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def report_tables(run_dirs) -> dict:
    """Three tables (as lists of rows) collected from evolved and evaluated run directories.

    ``gap_improvement``: one row per run, one column per checkpoint (labelled
    in seconds of that run's budget).  ``agent_stats``: the per-agent
    statistics of every run.  ``sensitivity``: one row per run keyed by the
    evaluation and verification set sizes, with the OSP rate and the final
    checkpoint mean gap improvement.
    """
    gi_rows, ts_rows, stat_rows, sens_rows = [], [], [], []
    header = None
    for rd in map(Path, run_dirs):
        meta = _read_json(rd / "run.json", "run metadata")
        summ = _read_json(rd / "eval" / "summary.json", "evaluation summary")
        cps = summ["checkpoints"]
        labels = [f"t={c:g}s" for c in cps]
        if header is None:
            header = ["run", "problem", "budget_s"] + labels
        elif len(labels) + 3 != len(header):
            raise CliError(EXIT_ARTIFACT, f"{rd} uses a different checkpoint count")
        gi_rows.append([rd.name, meta.get("problem"), f"{summ['budget']:g}"]
                       + [_pm(a) for a in summ["gap_improvement"]])
        ts_rows.append([rd.name, meta.get("problem")] + [_pm(summ["time_saving"][k])
                                                          for k in sorted(summ["time_saving"], key=float)])
        stats_path = _require(rd / "stats.csv", "agent statistics")
        for row in list(csv.reader(stats_path.read_text().splitlines()))[1:]:
            stat_rows.append([rd.name] + row)
        osp = summ.get("osp_rate")
        sens_rows.append([rd.name, meta.get("n_eval"), meta.get("n_verify"),
                          "n/a" if osp is None else f"{osp:.1f}", _pm(summ["gap_improvement"][-1])])
    targets = []
    if run_dirs:
        summ0 = json.loads((Path(run_dirs[0]) / "eval" / "summary.json").read_text())
        targets = sorted(summ0["time_saving"], key=float)
    return {
        "gap_improvement": [header or ["run"]] + gi_rows,
        "time_saving": [["run", "problem"] + [f"gap={t}" for t in targets]] + ts_rows,
        "agent_stats": [["run", *evolution.STAT_COLUMNS]] + stat_rows,
        "sensitivity": [["run", "n_eval", "n_verify", "osp_rate_pct", "final_gap_improvement"]] + sens_rows,
    }


def cmd_report(args) -> int:
    tables = report_tables(args.runs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in tables.items():
        atomic_write_text(out / f"{name}.csv", _csv(rows))
    print(json.dumps({"out": str(out), "tables": sorted(tables)}))
    return EXIT_OK


# ---------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="accelcut", description="Evolve, verify and evaluate MILP cut families.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen", help="generate instance files")
    g.add_argument("--config")
    g.add_argument("--role", choices=("eval", "verify", "spare", "test"), default="test")
    g.add_argument("--problem", choices=problems.KINDS)
    g.add_argument("--size", nargs="*", metavar="KEY=VALUE")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--format", choices=(NATIVE, TSPLIB_EUC2D), default=NATIVE)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    pr = sub.add_parser("prep", help="build the evaluation and verification sets")
    pr.add_argument("--config", required=True)
    pr.add_argument("--prep-dir")
    pr.set_defaults(func=cmd_prep)

    e = sub.add_parser("evolve", help="run the genetic search")
    e.add_argument("--config", required=True)
    e.add_argument("--prep-dir")
    e.add_argument("--run-dir")
    e.add_argument("--resume", action="store_true")
    e.add_argument("--n-eval", type=int, choices=SENSITIVITY_SIZES)
    e.add_argument("--n-verify", type=int, choices=SENSITIVITY_SIZES)
    e.add_argument("--generations", type=int, help="override T")
    e.set_defaults(func=cmd_evolve)

    v = sub.add_parser("verify", help="run the three verification stages on one cut file")
    v.add_argument("cut")
    v.add_argument("--config")
    v.add_argument("--prep-dir")
    v.add_argument("--verification-set")
    v.add_argument("--probe-cap", type=float, default=solver.PROBE_CAP_SECONDS)
    v.set_defaults(func=cmd_verify)

    ev = sub.add_parser("eval", help="evaluate a cut on test instances")
    ev.add_argument("cut", help="cut file, or 'none' for the bare model")
    ev.add_argument("--config", required=True)
    ev.add_argument("--instances", help="directory of native JSON instances (default: generated test pool)")
    ev.add_argument("--budget", type=float, help="override the wall-clock budget in seconds")
    ev.add_argument("--osp", action="store_true", help="also measure the optimal-solution preservation rate")
    ev.add_argument("--plot-data", action="store_true")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="collect result tables from run directories")
    r.add_argument("runs", nargs="+")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def _fail(code: int, exc: Exception, **detail) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, **detail}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as exc:
        return _fail(exc.code, exc, **exc.detail)
    except (ConfigError, problems.InvariantViolation) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (verification.CorruptArtifact, problems.ParseError, problems.UnsupportedFormat) as exc:
        return _fail(EXIT_ARTIFACT, exc)
    except FileNotFoundError as exc:
        return _fail(EXIT_ARTIFACT, exc, path=exc.filename)
    except (solver.BackendError, evaluation.PreprocessTimeout, evaluation.EvaluationFailed) as exc:
        return _fail(EXIT_SOLVER, exc)
    except (evolution.EvolutionError, agents.CorpusExhausted, agents.TransportError) as exc:
        return _fail(EXIT_SEARCH, exc)


if __name__ == "__main__":
    sys.exit(main())
