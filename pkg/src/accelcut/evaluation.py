"""Preprocessing, fitness and the reported metrics.

Gaps are always read through :func:`capped` so that "no incumbent" (an
infinite gap) counts as ``gap_cap``.  Traces are right-continuous step
functions: the gap at time ``t`` is the gap of the last trace point with
time ``<= t``, and ``gap_cap`` before the first point.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsl, milp, problems, solver
from .problems.io import atomic_write_text, instance_from_json
from .solver import SolveBudget, TracePoint
from .verification import VerificationSet, VerifyEntry

log = logging.getLogger(__name__)

NEUTRAL_FITNESS = 10.0
D_MAX = 5.0
D_MIN = -1.0
GAP_CAP = 1.0
CHECKPOINT_RATIOS = (1, 2, 10, 30, 60)
TARGET_GAPS = (1e-4, 1e-3, 1e-2, 1e-1)


class PreprocessTimeout(Exception):
    """A verification instance could not be solved to tolerance within the long budget."""


class EvaluationFailed(Exception):
    pass


# ---------------------------------------------------------------------
# pure metric arithmetic
# ---------------------------------------------------------------------

def capped(gap: float, gap_cap: float = GAP_CAP) -> float:
    if gap is None or math.isnan(gap):
        return gap_cap
    return min(gap, gap_cap)


def fit_value(C: float) -> float:
    """Fit = 10 * exp(-C)."""
    return NEUTRAL_FITNESS * math.exp(-C)


def relative_change(gap_ref: float, gap_cut: float, d_max: float = D_MAX) -> float:
    """d(i) = (gap_cut - gap_ref) / gap_ref, with the zero-reference cases pinned and clamped to [-1, d_max]."""
    if gap_ref == 0.0:
        return 0.0 if gap_cut == 0.0 else d_max
    return min(max((gap_cut - gap_ref) / gap_ref, D_MIN), d_max)


def checkpoints(budget_seconds: float) -> tuple:
    """Checkpoint times in the ratio 1:2:10:30:60, the last one equal to the budget."""
    return tuple(budget_seconds * r / CHECKPOINT_RATIOS[-1] for r in CHECKPOINT_RATIOS)


def _points(trace):
    return [p if isinstance(p, TracePoint) else TracePoint(*p) for p in trace]


def gap_at(trace, t: float, gap_cap: float = GAP_CAP) -> float:
    g = gap_cap
    for p in _points(trace):
        if p.t <= t:
            g = capped(p.gap, gap_cap)
        else:
            break
    return g


def gap_delta(g_ref: float, g_cut: float, d_max: float = D_MAX) -> float:
    """Delta_g = (g_ref - g_cut) / g_ref; when g_ref = 0 it is 0 (tie) or -d_max (cut worse)."""
    if g_ref == 0.0:
        return 0.0 if g_cut == 0.0 else -d_max
    return (g_ref - g_cut) / g_ref


def gap_improvement(ref_trace, cut_trace, checkpoints_, gap_cap: float = GAP_CAP) -> list:
    """Delta_g at each checkpoint."""
    return [gap_delta(gap_at(ref_trace, t, gap_cap), gap_at(cut_trace, t, gap_cap)) for t in checkpoints_]


@dataclass
class Aggregate:
    mean: float
    std: float
    n: int
    excluded: int = 0

    def to_json(self):
        return {"mean": self.mean, "std": self.std, "n": self.n, "excluded": self.excluded}


def _agg(values, excluded=0) -> Aggregate:
    if not values:
        return Aggregate(math.nan, math.nan, 0, excluded)
    arr = np.asarray(values, dtype=float)
    return Aggregate(float(arr.mean()), float(arr.std()), len(values), excluded)


def aggregate_gap_improvements(pairs_per_instance: list) -> list:
    """Per-checkpoint mean/std of Delta_g over instances.

    ``pairs_per_instance`` holds one list of ``(g_ref, g_cut)`` per instance;
    checkpoints where ``g_ref == 0`` are excluded and counted.
    """
    if not pairs_per_instance:
        return []
    out = []
    for k in range(len(pairs_per_instance[0])):
        vals, excl = [], 0
        for pairs in pairs_per_instance:
            g_ref, g_cut = pairs[k]
            if g_ref == 0.0:
                excl += 1
            else:
                vals.append(gap_delta(g_ref, g_cut))
        out.append(_agg(vals, excl))
    return out


def time_to_gap(trace, targets=TARGET_GAPS) -> dict:
    """First trace time with gap <= target, or None when never reached."""
    pts = _points(trace)
    out = {}
    for tg in targets:
        out[tg] = next((p.t for p in pts if p.gap <= tg), None)
    return out


def time_saving(t_ref: float, t_cut: float) -> float:
    """Delta_t = (t_ref - t_cut) / t_ref."""
    return (t_ref - t_cut) / t_ref


def aggregate_time_savings(pairs) -> Aggregate:
    """Mean/std of Delta_t over ``(t_ref, t_cut)`` pairs; pairs with an unreached side (None) are excluded and counted."""
    vals, excl = [], 0
    for t_ref, t_cut in pairs:
        if t_ref is None or t_cut is None or t_ref <= 0.0:
            excl += 1
        else:
            vals.append(time_saving(t_ref, t_cut))
    return _agg(vals, excl)


def pdi(trace, horizon: float, gap_cap: float = GAP_CAP) -> float:
    """Integral of the capped gap step function over ``[0, horizon]``."""
    total, t_prev, g_prev = 0.0, 0.0, gap_cap
    for p in _points(trace):
        if p.t >= horizon:
            break
        t = max(p.t, 0.0)
        total += g_prev * (t - t_prev)
        t_prev, g_prev = t, capped(p.gap, gap_cap)
    total += g_prev * max(horizon - t_prev, 0.0)
    return total


def knn_smooth(xs, ys, k: int = 3):
    """Replace each y by the mean of the ys of its k nearest xs (itself included)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) == 0:
        return ys
    k = min(k, len(xs))
    out = np.empty_like(ys)
    for i, x in enumerate(xs):
        nearest = np.argsort(np.abs(xs - x), kind="stable")[:k]
        out[i] = ys[nearest].mean()
    return out


# ---------------------------------------------------------------------
# eval set and preprocessing
# ---------------------------------------------------------------------

@dataclass
class EvalEntry:
    name: str
    instance: problems.ProblemInstance
    gap_ref: float
    ref_trace: list
    _model: milp.MilpModel | None = field(default=None, repr=False, compare=False)

    @property
    def model(self):
        if self._model is None:
            self._model = problems.build_model(self.instance)
        return self._model

    def to_json(self):
        return {"name": self.name, "instance": self.instance.to_json(), "gap_ref": self.gap_ref,
                "ref_trace": [[p.t, solver._num(p.gap), solver._num(p.best_bound), p.incumbent_obj]
                              for p in self.ref_trace]}

    @classmethod
    def from_json(cls, obj):
        trace = [TracePoint(t, solver._denum(g), solver._denum(b), o) for t, g, b, o in obj["ref_trace"]]
        return cls(obj["name"], instance_from_json(obj["instance"]), obj["gap_ref"], trace)


@dataclass
class EvalSet:
    entries: list
    budget: SolveBudget
    gap_cap: float = GAP_CAP

    def __len__(self):
        return len(self.entries)

    def save(self, path):
        atomic_write_text(path, json.dumps({"budget": self.budget.to_json(), "gap_cap": self.gap_cap,
                                            "entries": [e.to_json() for e in self.entries]}, indent=1))

    @classmethod
    def load(cls, path):
        obj = json.loads(Path(path).read_text())
        return cls([EvalEntry.from_json(e) for e in obj["entries"]], SolveBudget.from_json(obj["budget"]),
                   obj.get("gap_cap", GAP_CAP))


def _name(inst, k, prefix):
    return f"{prefix}{k:03d}_{inst.kind}_s{inst.seed}"


def preprocess(de_instances, dv_instances, budget: SolveBudget, long_budget: SolveBudget, seed: int = 42,
               out_dir=None, spares=None, gap_cap: float = GAP_CAP, log_events=None):
    """Build (D_e, D_v).

    D_e entries store the reference gap of a budgeted solve.  D_v entries
    additionally store an optimum (relative gap 1e-4 within ``long_budget``)
    and the LP-relaxation optimum.  A D_v instance that misses the tolerance
    is replaced by the next instance from ``spares``; with no spare left
    :class:`PreprocessTimeout` is raised.
    """
    de_entries = []
    for k, inst in enumerate(de_instances):
        r = solver.solve_mip(problems.build_model(inst), budget, seed)
        de_entries.append(EvalEntry(_name(inst, k, "e"), inst, capped(r.gap, gap_cap), r.trace))
    spare_iter = iter(spares or ())
    dv_entries = []
    for k, inst in enumerate(dv_instances):
        while True:
            try:
                dv_entries.append(_dv_entry(_name(inst, k, "v"), inst, budget, long_budget, seed, gap_cap))
                break
            except PreprocessTimeout as exc:
                log.warning("%s", exc)
                if log_events is not None:
                    log_events.emit("preprocess_reject", instance=inst.to_json(), reason=str(exc))
                inst = next(spare_iter, None)
                if inst is None:
                    raise
    es = EvalSet(de_entries, budget, gap_cap)
    vs = VerificationSet(dv_entries)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        es.save(out / "eval_set.json")
        vs.save(out / "verification_set.json")
    return es, vs


def _dv_entry(name, inst, budget, long_budget, seed, gap_cap):
    model = problems.build_model(inst)
    ref = solver.solve_mip(model, budget, seed)
    long_b = SolveBudget(long_budget.wall_seconds, long_budget.node_limit,
                         long_budget.gap_target or solver.DEFAULT_GAP_TOL)
    opt = solver.solve_mip(model, long_b, seed)
    if opt.incumbent is None or opt.gap > long_b.gap_target + 1e-12:
        raise PreprocessTimeout(f"{name}: gap {opt.gap} after {long_b.wall_seconds}s (status {opt.status})")
    sol = problems.canonicalize_solution(inst, opt.incumbent)
    lp = solver.solve_lp(milp.relax(model), seed)
    if lp.status != solver.OPTIMAL:
        raise PreprocessTimeout(f"{name}: LP relaxation status {lp.status}")
    obj = model.objective.value(sol)
    return VerifyEntry(name, inst, sol, obj, lp.incumbent, lp.objective, capped(ref.gap, gap_cap), model)


# ---------------------------------------------------------------------
# fitness
# ---------------------------------------------------------------------

@dataclass
class FitnessReport:
    d: list
    C: float
    fit: float
    gaps_cut: list
    gaps_ref: list
    clamped: list
    excluded: list = field(default_factory=list)

    def to_json(self):
        return {"d": self.d, "C": self.C, "fit": self.fit, "gaps_cut": self.gaps_cut,
                "gaps_ref": self.gaps_ref, "clamped": self.clamped, "excluded": self.excluded}


def cut_rows(cut, inst):
    """Rows and aux of ``cut`` on ``inst``; ``None`` means the empty cut."""
    if cut is None:
        return [], []
    if isinstance(cut, dsl.CutFamily):
        checked = dsl.check(cut, problems.symbol_table(inst), inst.kind)
    else:
        checked = cut.checked if hasattr(cut, "checked") else cut
    return dsl.instantiate(checked, inst)


def _model_with(cut, inst, base):
    rows, aux = cut_rows(cut, inst)
    fid = getattr(cut, "family_id", None) or "cut"
    return milp.append_cut_constraints(base, rows, aux, fid)


def _solve_with_retry(model, budget, seed):
    try:
        return solver.solve_mip(model, budget, seed)
    except solver.BackendError as first:
        log.warning("solve failed (%s); retrying once", first)
        return solver.solve_mip(model, budget, seed)


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        # results come back in submission order regardless of completion order
        return list(ex.map(fn, items))


def fitness(cut, eval_set: EvalSet, seed: int = 42, workers: int = 1, d_max: float = D_MAX) -> FitnessReport:
    """Solve base + cut on every D_e instance under the reference budget and score it."""

    def one(entry):
        try:
            m = _model_with(cut, entry.instance, entry.model)
            return capped(_solve_with_retry(m, eval_set.budget, seed).gap, eval_set.gap_cap)
        except solver.BackendError as exc:
            return exc

    results = _map(one, eval_set.entries, workers)
    d, gc, gr, clamped, excluded = [], [], [], [], []
    for entry, res in zip(eval_set.entries, results):
        if isinstance(res, Exception):
            excluded.append(entry.name)
            continue
        raw = math.inf if entry.gap_ref == 0.0 and res > 0 else (
            0.0 if entry.gap_ref == 0.0 else (res - entry.gap_ref) / entry.gap_ref)
        di = relative_change(entry.gap_ref, res, d_max)
        d.append(di)
        gc.append(res)
        gr.append(entry.gap_ref)
        clamped.append(di != raw)
    if not d:
        raise EvaluationFailed("every evaluation solve failed")
    C = float(np.mean(d))
    return FitnessReport(d, C, fit_value(C), gc, gr, clamped, excluded)


# ---------------------------------------------------------------------
# test-set metrics
# ---------------------------------------------------------------------

@dataclass
class InstanceMetrics:
    name: str
    checkpoints: tuple
    gaps_ref: list
    gaps_cut: list
    delta_g: list
    ttg_ref: dict
    ttg_cut: dict
    pdi_ref: float
    pdi_cut: float
    ref_trace: list
    cut_trace: list


@dataclass
class MetricsReport:
    checkpoints: tuple
    gap_improvement: list  # Aggregate per checkpoint
    time_saving: dict  # target -> Aggregate
    osp_rate: float | None
    instances: list
    budget: float

    @property
    def pdi_pairs(self):
        return [(m.pdi_ref, m.pdi_cut) for m in self.instances]

    def fitness(self) -> tuple:
        """``(C, Fit)`` over the test instances, from the gaps at the end of the budget."""
        ds = [relative_change(m.gaps_ref[-1], m.gaps_cut[-1]) for m in self.instances]
        C = sum(ds) / len(ds) if ds else 0.0
        return C, fit_value(C)

    def summary(self) -> dict:
        C, fit = self.fitness()
        return {"budget": self.budget, "checkpoints": list(self.checkpoints), "C": C, "fit": fit,
                "gap_improvement": [a.to_json() for a in self.gap_improvement],
                "time_saving": {f"{k:g}": a.to_json() for k, a in self.time_saving.items()},
                "osp_rate": self.osp_rate,
                "pdi": [{"instance": m.name, "ref": m.pdi_ref, "cut": m.pdi_cut} for m in self.instances]}

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["instance", "checkpoint", "gap_ref", "gap_cut", "delta_g"])
        for m in self.instances:
            for t, a, b, dg in zip(m.checkpoints, m.gaps_ref, m.gaps_cut, m.delta_g):
                w.writerow([m.name, f"{t:g}", f"{a:.10g}", f"{b:.10g}", f"{dg:.10g}"])
        return buf.getvalue()

    def write(self, out_dir, plot_data: bool = False) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "metrics.csv", self.csv_text())
        atomic_write_text(out / "summary.json", json.dumps(self.summary(), indent=1))
        if plot_data:
            write_plot_data(self, out / "plot_data")


def write_plot_data(report: MetricsReport, out_dir) -> None:
    """Gap-time step series and cumulative PDI series, one CSV per instance and side."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for m in report.instances:
        for side, trace in (("ref", m.ref_trace), ("cut", m.cut_trace)):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["t", "gap", "pdi"])
            for p in _points(trace):
                if p.t > report.budget:
                    break
                w.writerow([f"{p.t:.6g}", f"{capped(p.gap):.10g}", f"{pdi(trace, p.t):.10g}"])
            w.writerow([f"{report.budget:.6g}", f"{gap_at(trace, report.budget):.10g}",
                        f"{pdi(trace, report.budget):.10g}"])
            atomic_write_text(out / f"{m.name}_{side}.csv", buf.getvalue())


def evaluate_cut(cut, instances, budget: SolveBudget, seed: int = 42, workers: int = 1,
                 targets=TARGET_GAPS, gap_cap: float = GAP_CAP) -> MetricsReport:
    """Two solves per test instance (with and without the cut) and every reported metric."""
    cps = checkpoints(budget.wall_seconds)

    def one(arg):
        k, inst = arg
        base = problems.build_model(inst)
        ref = _solve_with_retry(base, budget, seed)
        cut_res = _solve_with_retry(_model_with(cut, inst, base), budget, seed)
        g_ref = [gap_at(ref.trace, t, gap_cap) for t in cps]
        g_cut = [gap_at(cut_res.trace, t, gap_cap) for t in cps]
        return InstanceMetrics(_name(inst, k, "t"), cps, g_ref, g_cut,
                               [gap_delta(a, b) for a, b in zip(g_ref, g_cut)],
                               time_to_gap(ref.trace, targets), time_to_gap(cut_res.trace, targets),
                               pdi(ref.trace, budget.wall_seconds, gap_cap),
                               pdi(cut_res.trace, budget.wall_seconds, gap_cap), ref.trace, cut_res.trace)

    per = _map(one, list(enumerate(instances)), workers)
    gi = aggregate_gap_improvements([list(zip(m.gaps_ref, m.gaps_cut)) for m in per])
    ts = {tg: aggregate_time_savings([(m.ttg_ref[tg], m.ttg_cut[tg]) for m in per]) for tg in targets}
    return MetricsReport(cps, gi, ts, None, per, budget.wall_seconds)


@dataclass
class OspOutcome:
    name: str
    solved: bool
    preserved: bool | None
    objective: float | None


def osp_rate(cut, instances, long_budget: SolveBudget, seed: int = 42, workers: int = 1):
    """Re-solve each base model with ``long_budget``, then probe whether the recorded optimum satisfies the cut.

    Returns ``(rate_percent, outcomes)``; instances without a proven optimum
    are reported as unsolved and left out of the rate.
    """
    gb = SolveBudget(long_budget.wall_seconds, long_budget.node_limit,
                     long_budget.gap_target or solver.DEFAULT_GAP_TOL)

    def one(arg):
        k, inst = arg
        name = _name(inst, k, "t")
        base = problems.build_model(inst)
        r = solver.solve_mip(base, gb, seed)
        if r.incumbent is None or r.gap > gb.gap_target + 1e-12:
            return OspOutcome(name, False, None, r.objective)
        sol = problems.canonicalize_solution(inst, r.incumbent)
        rows, aux = cut_rows(cut, inst)
        m = milp.append_cut_constraints(base, rows, aux, getattr(cut, "family_id", None) or "cut")
        ok = solver.feasibility_probe(milp.fix_assignment(m, sol)) == solver.FEASIBLE
        return OspOutcome(name, True, ok, r.objective)

    outs = _map(one, list(enumerate(instances)), workers)
    solved = [o for o in outs if o.solved]
    rate = 100.0 * sum(o.preserved for o in solved) / len(solved) if solved else math.nan
    return rate, outs


def default_workers() -> int:
    return os.cpu_count() or 1
