"""Job shop scheduling, big-M disjunctive makespan formulation.

Jobs and machines are numbered from 1; the operations of a job are numbered
from 0 in route order, so ``(j, k)`` is the k-th operation of job j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..milp import (BINARY, CONTINUOUS_NONNEG, GE, LE, Domain, LinConstraint, MilpModel,
                    Objective, VarDef)
from ..symbols import SymbolTable
from .base import TooLargeForOracle, as_int, check

KIND = "jssp"
ORACLE_MAX_PAIRS = 12


@dataclass(frozen=True)
class JsspInstance:
    n_machines: int
    routes: tuple  # per job: ((machine, p), ...) in processing order

    def to_json(self):
        return {"n_machines": self.n_machines,
                "routes": [[[m, as_int(p)] for m, p in r] for r in self.routes]}

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["n_machines"]), tuple(tuple((int(m), p) for m, p in r) for r in obj["routes"]))

    @property
    def n_jobs(self):
        return len(self.routes)

    @property
    def big_m(self) -> float:
        """Horizon used as big-M: total processing time."""
        return float(sum(p for r in self.routes for _, p in r))

    def ops(self):
        return [(j, k) for j in range(1, self.n_jobs + 1) for k in range(len(self.routes[j - 1]))]

    def p(self, j, k):
        return float(self.routes[j - 1][k][1])

    def mach(self, j, k):
        return self.routes[j - 1][k][0]

    def pairs(self):
        """Operation pairs sharing a machine, each listed once as (j1,k1,j2,k2) with (j1,k1) < (j2,k2)."""
        ops = self.ops()
        out = []
        for a in range(len(ops)):
            for b in range(a + 1, len(ops)):
                (j1, k1), (j2, k2) = ops[a], ops[b]
                if self.mach(j1, k1) == self.mach(j2, k2):
                    out.append((j1, k1, j2, k2))
        return out


def validate(inst: JsspInstance) -> None:
    check(inst.n_jobs >= 1 and inst.n_machines >= 1, "need jobs and machines")
    for j, route in enumerate(inst.routes, start=1):
        check(len(route) >= 1, f"job {j} has no operations")
        machines = [m for m, _ in route]
        check(len(set(machines)) == len(machines), f"job {j} visits a machine twice")
        for m, p in route:
            check(1 <= m <= inst.n_machines, f"job {j} uses unknown machine {m}")
            check(p > 0, f"job {j} has a nonpositive processing time")


@dataclass(frozen=True)
class JsspBounds:
    head: dict
    tail: dict
    L: dict
    load: dict
    CP: dict
    Interf: dict
    avg_load: float

    @property
    def bound(self) -> float:
        return max(self.avg_load, max(self.CP.values(), default=0.0), max(self.Interf.values(), default=0.0))


def makespan_bounds(inst: JsspInstance) -> JsspBounds:
    """Heads, tails, loads and the three makespan lower bounds.

    ``CP[m]`` is the one-machine bound load + min head + min tail.  For job j,
    ``Interf[j]`` takes, over each of its operations o and each other
    operation q on o's machine, the better of the two orderings of o and q:
    q first delays o's start to at least p(q); q second delays the job's
    end past o by at least p(q).
    """
    head, tail, L = {}, {}, {}
    for j in range(1, inst.n_jobs + 1):
        route = inst.routes[j - 1]
        total = float(sum(p for _, p in route))
        L[j] = total
        acc = 0.0
        for k, (_, p) in enumerate(route):
            head[(j, k)] = acc
            tail[(j, k)] = total - acc - p
            acc += p
    load, CP = {}, {}
    for m in range(1, inst.n_machines + 1):
        on_m = [o for o in inst.ops() if inst.mach(*o) == m]
        load[m] = float(sum(inst.p(*o) for o in on_m))
        if on_m:
            CP[m] = load[m] + min(head[o] for o in on_m) + min(tail[o] for o in on_m)
        else:
            CP[m] = 0.0
    Interf = {}
    for j in range(1, inst.n_jobs + 1):
        best = None
        for k in range(len(inst.routes[j - 1])):
            o = (j, k)
            p, h, t = inst.p(*o), head[o], tail[o]
            for q in inst.ops():
                if q[0] == j or inst.mach(*q) != inst.mach(*o):
                    continue
                pq = inst.p(*q)
                v = min(max(h, pq) + p + t, h + p + max(t, pq))
                best = v if best is None else max(best, v)
        Interf[j] = L[j] if best is None else best
    avg = float(sum(load.values())) / inst.n_machines
    return JsspBounds(head, tail, L, load, CP, Interf, avg)


def build_model(inst: JsspInstance) -> MilpModel:
    ops = inst.ops()
    P = inst.pairs()
    M = inst.big_m
    S = VarDef("S", 2, Domain(CONTINUOUS_NONNEG), tuple(ops))
    y = VarDef("y", 4, Domain(BINARY), tuple(P))
    cmax = VarDef("Cmax", 0, Domain(CONTINUOUS_NONNEG), ((),))
    rows = []
    for j in range(1, inst.n_jobs + 1):
        for k in range(len(inst.routes[j - 1]) - 1):
            rows.append(LinConstraint.build({("S", (j, k + 1)): 1.0, ("S", (j, k)): -1.0}, GE,
                                            inst.p(j, k), label="precedence"))
    for (j1, k1, j2, k2) in P:
        a, b, yy = ("S", (j1, k1)), ("S", (j2, k2)), ("y", (j1, k1, j2, k2))
        # a + p_a <= b + M (1 - y)
        rows.append(LinConstraint.build({a: 1.0, b: -1.0, yy: M}, LE, M - inst.p(j1, k1), label="disj_ab"))
        # b + p_b <= a + M y
        rows.append(LinConstraint.build({b: 1.0, a: -1.0, yy: -M}, LE, -inst.p(j2, k2), label="disj_ba"))
    for j in range(1, inst.n_jobs + 1):
        last = len(inst.routes[j - 1]) - 1
        rows.append(LinConstraint.build({("Cmax", ()): 1.0, ("S", (j, last)): -1.0}, GE,
                                        inst.p(j, last), label="makespan"))
    obj = Objective("min", ((1.0, ("Cmax", ())),))
    return MilpModel((S, y, cmax), tuple(rows), obj, symbol_table(inst))


def symbol_table(inst: JsspInstance) -> SymbolTable:
    b = makespan_bounds(inst)
    ops = inst.ops()
    st = SymbolTable()
    st.add_set("J", range(1, inst.n_jobs + 1), "jobs")
    st.add_set("O", ops, "operations (j,k), k = 0.. in route order")
    st.add_set("Mach", range(1, inst.n_machines + 1), "machines")
    st.add_set("P", inst.pairs(), "operation pairs (j1,k1,j2,k2) sharing a machine, (j1,k1) < (j2,k2)")
    st.add_param("p", {o: inst.p(*o) for o in ops}, 2, "processing time of operation (j,k)")
    st.add_param("mach", {o: inst.mach(*o) for o in ops}, 2, "machine of operation (j,k)")
    st.add_param("m", inst.n_machines, doc="number of machines")
    st.add_param("M", inst.big_m, doc="big-M horizon (total processing time)")
    st.add_param("head", b.head, 2, "processing time before (j,k) within job j")
    st.add_param("tail", b.tail, 2, "processing time after (j,k) within job j")
    st.add_param("L", b.L, 1, "total processing time of job j")
    st.add_param("load", b.load, 1, "total processing time on machine mm")
    st.add_param("CP", b.CP, 1, "one-machine bound: load + min head + min tail")
    st.add_param("Interf", b.Interf, 1, "job interference bound of job j")
    st.add_param("avg_load", b.avg_load, doc="total processing time / m")
    st.add_var("S", 2, "S[j,k] >= 0: start time of operation (j,k) (continuous)")
    st.add_var("y", 4, "y[j1,k1,j2,k2] = 1 iff (j1,k1) runs before (j2,k2) (binary)")
    st.add_var("Cmax", 0, "makespan (continuous)")
    return st


def generate(size: dict, rng: np.random.Generator) -> JsspInstance:
    nj = int(size["jobs"])
    nm = int(size["machines"])
    check(nj >= 1 and nm >= 1, "size must be positive")
    routes = []
    for _ in range(nj):
        order = rng.permutation(nm) + 1
        ps = rng.integers(1, 100, size=nm)
        routes.append(tuple((int(m), int(p)) for m, p in zip(order, ps)))
    return JsspInstance(nm, tuple(routes))


def _arrays(inst):
    ops = inst.ops()
    pos = {o: q for q, o in enumerate(ops)}
    p = np.array([inst.p(*o) for o in ops])
    job_arcs = [(pos[(j, k)], pos[(j, k + 1)]) for j in range(1, inst.n_jobs + 1)
                for k in range(len(inst.routes[j - 1]) - 1)]
    pairs = [(pos[(j1, k1)], pos[(j2, k2)]) for (j1, k1, j2, k2) in inst.pairs()]
    return ops, pos, p, job_arcs, pairs


def brute_force(inst: JsspInstance):
    P = inst.pairs()
    if len(P) > ORACLE_MAX_PAIRS:
        raise TooLargeForOracle(f"JSSP oracle limited to |P| <= {ORACLE_MAX_PAIRS}")
    ops, _, p, job_arcs, pairs = _arrays(inst)
    best, mask, s = kernels.jssp_best_schedule(p, job_arcs, pairs)
    vals = {("S", o): float(s[q]) for q, o in enumerate(ops)}
    for q, pr in enumerate(P):
        vals[("y", pr)] = float((mask >> q) & 1)
    vals[("Cmax", ())] = float(best)
    return best, vals


def semi_active(inst: JsspInstance, orientation: dict) -> dict:
    """Earliest start times given pair orientations ``{pair: 1 if first precedes}``."""
    ops, pos, p, job_arcs, pairs = _arrays(inst)
    arcs = list(job_arcs)
    for q, pr in enumerate(inst.pairs()):
        a, b = pairs[q]
        arcs.append((a, b) if orientation[pr] > 0.5 else (b, a))
    s = np.zeros(len(ops))
    for _ in range(len(ops) + 1):
        changed = False
        for a, b in arcs:
            if s[a] + p[a] > s[b]:
                s[b] = s[a] + p[a]
                changed = True
        if not changed:
            break
    else:
        raise ValueError("orientation is cyclic")
    return {o: float(s[pos[o]]) for o in ops}


def canonicalize(inst: JsspInstance, values: dict) -> dict:
    """Left-shift to the semi-active schedule of the incumbent's orientation."""
    orient = {pr: float(round(values[("y", pr)])) for pr in inst.pairs()}
    starts = semi_active(inst, orient)
    out = {("S", o): v for o, v in starts.items()}
    out.update({("y", pr): v for pr, v in orient.items()})
    out[("Cmax", ())] = max(starts[o] + inst.p(*o) for o in inst.ops())
    return out


def describe() -> str:
    return (
        "Job shop scheduling, big-M disjunctive formulation, minimise makespan Cmax.\n"
        "S[j,k+1] >= S[j,k] + p[j,k] within each job\n"
        "for (j1,k1,j2,k2) in P: S[j1,k1] + p[j1,k1] <= S[j2,k2] + M (1 - y[j1,k1,j2,k2])\n"
        "                        S[j2,k2] + p[j2,k2] <= S[j1,k1] + M y[j1,k1,j2,k2]\n"
        "Cmax >= S[j,last] + p[j,last] for all jobs; S, Cmax >= 0; y binary"
    )
