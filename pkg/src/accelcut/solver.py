"""Budgeted MILP/LP solves, gap traces and fixed-variable feasibility probes.

The reference backend drives HiGHS through ``highspy``.  ``ACCELCUT_SOLVER``
selects a registered backend by name (only ``highs`` ships) and
``ACCELCUT_SOLVER_PATH`` is prepended to ``sys.path`` before the solver
bindings are imported, to pick up a non-default HiGHS build.
"""

from __future__ import annotations

import logging
import math
import os
import sys
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .milp import EQ, GE, LE, MilpModel

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
BUDGET_EXHAUSTED = "budget_exhausted"
ERROR = "error"

DEFAULT_GAP_TOL = 1e-4
PROBE_TOL = 1e-6
PROBE_CAP_SECONDS = 30.0


class BackendError(Exception):
    """Solver infrastructure failure (retryable, never a verdict on a cut)."""


class Unbounded(BackendError):
    pass


@dataclass(frozen=True)
class SolveBudget:
    wall_seconds: float
    node_limit: int | None = None
    gap_target: float | None = None

    def __post_init__(self):
        if not self.wall_seconds > 0:
            raise ValueError("wall_seconds must be > 0")
        if self.gap_target is not None and not 0 < self.gap_target <= 1:
            raise ValueError("gap_target must lie in (0, 1]")
        if self.node_limit is not None and self.node_limit < 0:
            raise ValueError("node_limit must be >= 0")

    def to_json(self):
        return {"wall_seconds": self.wall_seconds, "node_limit": self.node_limit,
                "gap_target": self.gap_target}

    @classmethod
    def from_json(cls, obj):
        return cls(float(obj["wall_seconds"]), obj.get("node_limit"), obj.get("gap_target"))


@dataclass(frozen=True)
class TracePoint:
    t: float
    gap: float
    best_bound: float
    incumbent_obj: float | None


@dataclass
class SolveResult:
    status: str
    incumbent: dict | None = None
    objective: float | None = None
    best_bound: float = -math.inf
    gap: float = math.inf
    trace: list = field(default_factory=list)
    runtime: float = 0.0
    nodes: int = 0

    def to_json(self, with_solution: bool = False) -> dict:
        out = {"status": self.status, "objective": self.objective,
               "best_bound": _num(self.best_bound), "gap": _num(self.gap),
               "runtime": self.runtime, "nodes": self.nodes,
               "trace": [[p.t, _num(p.gap), _num(p.best_bound), p.incumbent_obj] for p in self.trace]}
        if with_solution and self.incumbent is not None:
            from .milp import values_to_json
            out["incumbent"] = values_to_json(self.incumbent)
        return out

    @classmethod
    def from_json(cls, obj) -> "SolveResult":
        from .milp import values_from_json
        inc = obj.get("incumbent")
        return cls(obj["status"], None if inc is None else values_from_json(inc), obj.get("objective"),
                   _denum(obj["best_bound"]), _denum(obj["gap"]),
                   [TracePoint(t, _denum(g), _denum(b), o) for t, g, b, o in obj.get("trace", [])],
                   obj.get("runtime", 0.0), obj.get("nodes", 0))


def _num(x):
    if x is None or math.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


def _denum(x):
    if isinstance(x, str):
        return float(x)
    return x


def gap_of(incumbent: float | None, bound: float) -> float:
    """|incumbent - bound| / max(|incumbent|, 1e-10); +inf without an incumbent."""
    if incumbent is None or not math.isfinite(incumbent) or not math.isfinite(bound):
        return math.inf
    return abs(incumbent - bound) / max(abs(incumbent), 1e-10)


class Backend:
    """Interface every solver backend implements."""

    name = "abstract"
    deterministic = False

    def solve_mip(self, model: MilpModel, budget: SolveBudget, seed: int = 42,
                  log_path: str | None = None) -> SolveResult:
        raise NotImplementedError

    def solve_lp(self, model: MilpModel, seed: int = 42) -> SolveResult:
        raise NotImplementedError

    def feasibility_probe(self, model: MilpModel, cap_seconds: float = PROBE_CAP_SECONDS) -> str:
        raise NotImplementedError


def _import_highspy():
    extra = os.environ.get("ACCELCUT_SOLVER_PATH")
    if extra and extra not in sys.path:
        sys.path.insert(0, extra)
    try:
        import highspy
    except ImportError as exc:  # pragma: no cover - declared dependency
        raise BackendError(f"highspy unavailable: {exc}") from exc
    return highspy


class _Lp:
    """Column/row arrays of a model in HiGHS layout."""

    def __init__(self, model: MilpModel, integral: bool = True):
        self.keys = model.var_keys()
        self.col = {k: i for i, k in enumerate(self.keys)}
        ncol = len(self.keys)
        lo = np.empty(ncol)
        hi = np.empty(ncol)
        integ = np.zeros(ncol, dtype=bool)
        pos = 0
        for v in model.vars:
            for idx in v.indices:
                lo[pos], hi[pos] = v.bounds_of(idx)
                integ[pos] = v.domain.integer
                pos += 1
        self.col_lower, self.col_upper = lo, hi
        self.integer = integ if integral else np.zeros(ncol, dtype=bool)
        cost = np.zeros(ncol)
        for c, k in model.objective.terms:
            cost[self.col[k]] += c
        self.cost = cost
        self.offset = model.objective.constant
        self.sense = model.objective.sense
        rlo, rhi, starts, index, value = [], [], [0], [], []
        for row in model.constraints:
            for c, k in row.terms:
                index.append(self.col[k])
                value.append(c)
            starts.append(len(index))
            rlo.append(-math.inf if row.relation == LE else row.rhs)
            rhi.append(math.inf if row.relation == GE else row.rhs)
        self.row_lower = np.asarray(rlo, dtype=float)
        self.row_upper = np.asarray(rhi, dtype=float)
        self.starts = np.asarray(starts, dtype=np.int32)
        self.index = np.asarray(index, dtype=np.int32)
        self.value = np.asarray(value, dtype=float)

    def box_bound(self) -> float:
        """Objective bound from column bounds alone (infinite when a relevant bound is missing)."""
        c = self.cost if self.sense != "max" else -self.cost
        lo = np.where(c > 0, self.col_lower, np.where(c < 0, self.col_upper, 0.0))
        with np.errstate(invalid="ignore"):
            val = float(np.sum(c * lo)) if np.all(np.isfinite(lo[c != 0])) else -math.inf
        val += self.offset if self.sense != "max" else -self.offset
        return val if self.sense != "max" else -val

    def to_highs(self, highspy):
        lp = highspy.HighsLp()
        lp.num_col_ = len(self.keys)
        lp.num_row_ = len(self.row_lower)
        lp.col_cost_ = self.cost
        lp.col_lower_ = self.col_lower
        lp.col_upper_ = self.col_upper
        lp.row_lower_ = self.row_lower
        lp.row_upper_ = self.row_upper
        lp.offset_ = self.offset
        lp.sense_ = highspy.ObjSense.kMaximize if self.sense == "max" else highspy.ObjSense.kMinimize
        lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
        lp.a_matrix_.start_ = self.starts
        lp.a_matrix_.index_ = self.index
        lp.a_matrix_.value_ = self.value
        lp.a_matrix_.num_col_ = lp.num_col_
        lp.a_matrix_.num_row_ = lp.num_row_
        if self.integer.any():
            lp.integrality_ = [highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous
                               for f in self.integer]
        return lp


class HighsBackend(Backend):
    name = "highs"
    # single-threaded HiGHS is deterministic whenever the wall-clock limit is not the binding stop
    deterministic = True

    def __init__(self, threads: int = 1):
        self.highspy = _import_highspy()
        self.threads = threads

    def _session(self, seed, log_path=None):
        h = self.highspy.Highs()
        if log_path:
            h.setOptionValue("output_flag", True)
            h.setOptionValue("log_to_console", False)
            h.setOptionValue("log_file", str(log_path))
        else:
            h.setOptionValue("output_flag", False)
        h.setOptionValue("random_seed", int(seed) % (2 ** 31 - 1))
        h.setOptionValue("threads", self.threads)
        return h

    def solve_mip(self, model, budget, seed=42, log_path=None):
        hp = self.highspy
        lp = _Lp(model)
        h = self._session(seed, log_path)
        h.setOptionValue("time_limit", float(budget.wall_seconds))
        h.setOptionValue("mip_rel_gap", float(budget.gap_target or DEFAULT_GAP_TOL))
        if budget.node_limit is not None:
            h.setOptionValue("mip_max_nodes", int(budget.node_limit))
        minimize = model.objective.sense != "max"
        recorder = _TraceRecorder(minimize)
        try:
            h.passModel(lp.to_highs(hp))
            if lp.integer.any():
                h.setCallback(recorder.callback, None)
                h.startCallback(hp.cb.HighsCallbackType.kCallbackMipInterrupt)
                h.startCallback(hp.cb.HighsCallbackType.kCallbackMipImprovingSolution)
            t0 = time.perf_counter()
            h.run()
            runtime = time.perf_counter() - t0
            status = h.getModelStatus()
            info = h.getInfo()
        except Exception as exc:  # noqa: BLE001 - wrap every binding failure
            raise BackendError(f"HiGHS failed: {exc}") from exc
        MS = hp.HighsModelStatus
        if status in (MS.kInfeasible,):
            return SolveResult(INFEASIBLE, runtime=runtime)
        if status in (MS.kUnbounded, MS.kUnboundedOrInfeasible):
            return SolveResult(ERROR, runtime=runtime)
        has_sol = info.primal_solution_status == 2
        obj = float(info.objective_function_value) if has_sol else None
        if lp.integer.any():
            bound = float(info.mip_dual_bound)
            if not abs(bound) < 1e30:
                # stopped before the root LP: fall back to the bound implied by the variable box
                bound = lp.box_bound()
        else:
            bound = obj if obj is not None else (-math.inf if minimize else math.inf)
        if status == MS.kOptimal:
            st = OPTIMAL
        elif status in (MS.kTimeLimit, MS.kSolutionLimit, MS.kIterationLimit, MS.kInterrupt,
                        MS.kObjectiveBound, MS.kObjectiveTarget):
            st = BUDGET_EXHAUSTED
        elif has_sol:
            st = FEASIBLE
        else:
            raise BackendError(f"HiGHS returned {h.modelStatusToString(status)}")
        incumbent = None
        if has_sol:
            xs = h.getSolution().col_value
            incumbent = {k: float(xs[i]) for i, k in enumerate(lp.keys)}
        gap = 0.0 if (st == OPTIMAL and obj is not None and not lp.integer.any()) else gap_of(obj, bound)
        recorder.finish(runtime, obj, bound)
        trace = recorder.points
        if trace:
            gap = min(gap, trace[-1].gap) if st == OPTIMAL else gap
        return SolveResult(st, incumbent, obj, bound, gap, trace, runtime, int(info.mip_node_count))

    def solve_lp(self, model, seed=42):
        if not model.is_continuous():
            raise ValueError("solve_lp needs a continuous model; relax it first")
        hp = self.highspy
        lp = _Lp(model)
        h = self._session(seed)
        try:
            h.passModel(lp.to_highs(hp))
            t0 = time.perf_counter()
            h.run()
            runtime = time.perf_counter() - t0
            status = h.getModelStatus()
        except Exception as exc:  # noqa: BLE001
            raise BackendError(f"HiGHS failed: {exc}") from exc
        MS = hp.HighsModelStatus
        if status == MS.kInfeasible:
            return SolveResult(INFEASIBLE, runtime=runtime)
        if status in (MS.kUnbounded, MS.kUnboundedOrInfeasible):
            raise Unbounded("LP relaxation is unbounded (malformed model)")
        if status != MS.kOptimal:
            raise BackendError(f"LP solve ended with {h.modelStatusToString(status)}")
        obj = float(h.getInfo().objective_function_value)
        xs = h.getSolution().col_value
        sol = {k: float(xs[i]) for i, k in enumerate(lp.keys)}
        return SolveResult(OPTIMAL, sol, obj, obj, 0.0,
                           [TracePoint(runtime, 0.0, obj, obj)], runtime, 0)

    def feasibility_probe(self, model, cap_seconds=PROBE_CAP_SECONDS):
        residual = _substitute_fixed(model)
        if residual is None:
            return INFEASIBLE
        if not residual.constraints:
            return "feasible"
        res = self.solve_mip(residual, SolveBudget(cap_seconds), seed=0) if not residual.is_continuous() \
            else self._probe_lp(residual, cap_seconds)
        if res.status == INFEASIBLE:
            return INFEASIBLE
        if res.incumbent is not None:
            return "feasible"
        raise BackendError(f"feasibility probe inconclusive ({res.status}) within {cap_seconds}s")

    def _probe_lp(self, model, cap_seconds):
        hp = self.highspy
        lp = _Lp(model)
        h = self._session(0)
        h.setOptionValue("time_limit", float(cap_seconds))
        try:
            h.passModel(lp.to_highs(hp))
            h.run()
            status = h.getModelStatus()
        except Exception as exc:  # noqa: BLE001
            raise BackendError(f"HiGHS failed: {exc}") from exc
        MS = hp.HighsModelStatus
        if status == MS.kInfeasible:
            return SolveResult(INFEASIBLE)
        if status == MS.kOptimal:
            return SolveResult(OPTIMAL, incumbent={})
        if status == MS.kTimeLimit:
            raise BackendError(f"feasibility probe exceeded {cap_seconds}s")
        raise BackendError(f"feasibility probe ended with {h.modelStatusToString(status)}")


class _TraceRecorder:
    """Accumulates (t, gap, bound, incumbent) at every incumbent/bound change.

    HiGHS invokes the callback on its own thread; a lock guards the list.
    Bounds and gaps are made monotone so that numerical jitter in the
    reported dual bound cannot produce a nonmonotone trace.
    """

    def __init__(self, minimize: bool):
        self.minimize = minimize
        self.points: list[TracePoint] = []
        self.lock = threading.Lock()
        self._inc = None
        self._bound = -math.inf if minimize else math.inf

    def _push(self, t, inc, bound):
        with self.lock:
            if inc is not None and math.isfinite(inc):
                if self._inc is None or (inc < self._inc if self.minimize else inc > self._inc):
                    self._inc = inc
            if math.isfinite(bound):
                self._bound = max(self._bound, bound) if self.minimize else min(self._bound, bound)
            bound_now = self._bound
            if self._inc is not None:
                bound_now = min(bound_now, self._inc) if self.minimize else max(bound_now, self._inc)
            gap = gap_of(self._inc, bound_now)
            if self.points:
                last = self.points[-1]
                gap = min(gap, last.gap)
                if last.incumbent_obj == self._inc and last.best_bound == bound_now and last.gap == gap:
                    return
                t = max(t, last.t)
            self.points.append(TracePoint(float(t), gap, bound_now, self._inc))

    def callback(self, ctype, msg, data_out, data_in, user_data):
        try:
            pb = data_out.mip_primal_bound
            inc = pb if abs(pb) < 1e30 else None
            db = data_out.mip_dual_bound
            self._push(data_out.running_time, inc, db if abs(db) < 1e30 else math.nan)
        except Exception:  # noqa: BLE001 - never let a trace failure abort a solve
            log.exception("trace callback failed")

    def finish(self, runtime, obj, bound):
        t = max(runtime, self.points[-1].t if self.points else 0.0)
        self._push(t, obj, bound if bound is not None else math.nan)


def _substitute_fixed(model: MilpModel) -> MilpModel | None:
    """Fold fixed variables into row right-hand sides.

    Returns ``None`` when a row without free variables is violated (beyond
    :data:`PROBE_TOL`, scaled by row magnitude), else the residual model over
    the free variables with a zero objective.
    """
    from dataclasses import replace
    from .milp import LinConstraint, Objective
    fixed = {}
    for v in model.vars:
        for idx in v.indices:
            lo, hi = v.bounds_of(idx)
            if lo == hi:
                fixed[(v.name, idx)] = lo
    rows = []
    used = set()
    for row in model.constraints:
        act = 0.0
        scale = max(1.0, abs(row.rhs))
        free = []
        for c, k in row.terms:
            if k in fixed:
                act += c * fixed[k]
                scale = max(scale, abs(c * fixed[k]))
            else:
                free.append((c, k))
        rhs = row.rhs - act
        if not free:
            tol = PROBE_TOL * scale
            if (row.relation == LE and rhs < -tol) or (row.relation == GE and rhs > tol) \
                    or (row.relation == EQ and abs(rhs) > tol):
                return None
            continue
        used.update(k for _, k in free)
        rows.append(LinConstraint(tuple(free), row.relation, rhs, row.origin, row.label))
    new_vars = []
    for v in model.vars:
        idxs = tuple(idx for idx in v.indices if (v.name, idx) in used)
        if idxs:
            new_vars.append(replace(v, indices=idxs, bounds={i: b for i, b in v.bounds.items() if i in set(idxs)}))
    return MilpModel(tuple(new_vars), tuple(rows), Objective("min", ()), None)


_BACKENDS = {"highs": HighsBackend}
_default: Backend | None = None


def get_backend() -> Backend:
    global _default
    if _default is None:
        name = os.environ.get("ACCELCUT_SOLVER", "highs")
        if name not in _BACKENDS:
            raise BackendError(f"unknown solver backend {name!r}; known: {sorted(_BACKENDS)}")
        _default = _BACKENDS[name]()
    return _default


def solve_mip(model, budget, seed=42, log_path=None) -> SolveResult:
    return get_backend().solve_mip(model, budget, seed, log_path)


def solve_lp(model, seed=42) -> SolveResult:
    return get_backend().solve_lp(model, seed)


def feasibility_probe(model, cap_seconds=PROBE_CAP_SECONDS) -> str:
    return get_backend().feasibility_probe(model, cap_seconds)
