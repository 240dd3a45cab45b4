"""Multi-commodity capacitated fixed-charge network design."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..milp import (BINARY, CONTINUOUS_NONNEG, EQ, LE, Domain, LinConstraint, MilpModel,
                    Objective, VarDef, fix_assignment, linear_terms, relax)
from ..symbols import SymbolTable
from .base import InfeasibleDraw, TooLargeForOracle, as_int, check

KIND = "mcnd"
ORACLE_MAX_ARCS = 12
GENERATOR_RETRIES = 50


@dataclass(frozen=True)
class McndInstance:
    n_nodes: int
    arcs: tuple  # ((i, j, c, f, u), ...) with 1-based nodes
    commodities: tuple  # ((O, D, d), ...)

    def to_json(self):
        return {"n_nodes": self.n_nodes,
                "arcs": [[i, j, as_int(c), as_int(f), as_int(u)] for i, j, c, f, u in self.arcs],
                "commodities": [[o, dd, as_int(d)] for o, dd, d in self.commodities]}

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["n_nodes"]),
                   tuple((int(a[0]), int(a[1]), a[2], a[3], a[4]) for a in obj["arcs"]),
                   tuple((int(k[0]), int(k[1]), k[2]) for k in obj["commodities"]))

    def arc_pairs(self):
        return [(a[0], a[1]) for a in self.arcs]

    def arc_data(self, key):
        pos = {"c": 2, "f": 3, "u": 4}[key]
        return {(a[0], a[1]): float(a[pos]) for a in self.arcs}

    def inarcs(self, node):
        return [(a[0], a[1]) for a in self.arcs if a[1] == node]

    def outarcs(self, node):
        return [(a[0], a[1]) for a in self.arcs if a[0] == node]


def validate(inst: McndInstance) -> None:
    nodes = range(1, inst.n_nodes + 1)
    pairs = inst.arc_pairs()
    check(len(set(pairs)) == len(pairs), "duplicate arcs")
    for i, j, c, f, u in inst.arcs:
        check(i in nodes and j in nodes and i != j, f"bad arc ({i},{j})")
        check(u > 0, f"arc ({i},{j}) needs capacity > 0")
        check(c >= 0 and f >= 0, f"arc ({i},{j}) needs nonnegative costs")
    check(len(inst.commodities) >= 1, "need at least one commodity")
    for o, dd, d in inst.commodities:
        check(o in nodes and dd in nodes, "commodity endpoints must be nodes")
        check(o != dd, "commodity origin equals destination")
        check(d > 0, "commodity demand must be > 0")


def umax(inst: McndInstance) -> dict:
    """Largest capacity entering each commodity's destination (0 if none)."""
    cap = inst.arc_data("u")
    out = {}
    for k, (_, dest, _) in enumerate(inst.commodities, start=1):
        ins = inst.inarcs(dest)
        out[k] = max((cap[a] for a in ins), default=0.0)
    return out


def build_model(inst: McndInstance, with_symbols: bool = True) -> MilpModel:
    A = inst.arc_pairs()
    K = range(1, len(inst.commodities) + 1)
    x = VarDef("x", 3, Domain(CONTINUOUS_NONNEG), tuple((i, j, k) for (i, j) in A for k in K))
    y = VarDef("y", 2, Domain(BINARY), tuple(A))
    cost = inst.arc_data("c")
    fixed = inst.arc_data("f")
    cap = inst.arc_data("u")
    rows = []
    for k, (o, dest, d) in enumerate(inst.commodities, start=1):
        for node in range(1, inst.n_nodes + 1):
            outs = {("x", (i, j, k)): 1.0 for (i, j) in inst.outarcs(node)}
            ins = {("x", (i, j, k)): 1.0 for (i, j) in inst.inarcs(node)}
            if node == o:
                rows.append(LinConstraint.build(outs, EQ, d, label="origin"))
            elif node == dest:
                rows.append(LinConstraint.build(ins, EQ, d, label="dest"))
            else:
                bal = dict(outs)
                for key in ins:
                    bal[key] = bal.get(key, 0.0) - 1.0
                rows.append(LinConstraint.build(bal, EQ, 0, label="balance"))
    for a in A:
        coefs = {("x", (a[0], a[1], k)): 1.0 for k in K}
        coefs[("y", a)] = -cap[a]
        rows.append(LinConstraint.build(coefs, LE, 0, label="capacity"))
    terms = {("x", (i, j, k)): cost[(i, j)] for (i, j) in A for k in K}
    terms.update({("y", a): fixed[a] for a in A})
    obj = Objective("min", linear_terms(terms))
    return MilpModel((x, y), tuple(rows), obj, symbol_table(inst) if with_symbols else None)


def symbol_table(inst: McndInstance) -> SymbolTable:
    K = list(range(1, len(inst.commodities) + 1))
    nodes = list(range(1, inst.n_nodes + 1))
    st = SymbolTable()
    st.add_set("N", nodes, "network nodes")
    st.add_set("A", inst.arc_pairs(), "candidate directed arcs (i,j)")
    st.add_set("K", K, "commodities")
    st.add_param("c", inst.arc_data("c"), 2, "unit flow cost on arc (i,j)")
    st.add_param("f", inst.arc_data("f"), 2, "fixed cost to open arc (i,j)")
    st.add_param("u", inst.arc_data("u"), 2, "capacity of arc (i,j)")
    st.add_param("d", {k: float(inst.commodities[k - 1][2]) for k in K}, 1, "demand of commodity k")
    st.add_param("Ok", {k: inst.commodities[k - 1][0] for k in K}, 1, "origin node of commodity k")
    st.add_param("Dk", {k: inst.commodities[k - 1][1] for k in K}, 1, "destination node of commodity k")
    st.add_param("umax", umax(inst), 1, "largest capacity of an arc entering Dk[k]")
    st.add_setfn("inarcs", {(v,): tuple(inst.inarcs(v)) for v in nodes}, 1, 2, "arcs entering a node")
    st.add_setfn("outarcs", {(v,): tuple(inst.outarcs(v)) for v in nodes}, 1, 2, "arcs leaving a node")
    st.add_var("x", 3, "x[i,j,k] >= 0: flow of commodity k on arc (i,j) (continuous)")
    st.add_var("y", 2, "y[i,j] = 1 iff arc (i,j) is opened (binary)")
    return st


def generate(size: dict, rng: np.random.Generator, lp_feasible=None) -> McndInstance:
    """Random strongly connected digraph (Hamiltonian cycle plus random arcs).

    ``lp_feasible`` checks the LP relaxation; draws failing it are redrawn
    up to :data:`GENERATOR_RETRIES` times.
    """
    n = int(size["nodes"])
    m = int(size.get("arcs", 2 * n))
    nk = int(size.get("commodities", 2))
    check(n >= 2, "MCND needs at least 2 nodes")
    check(n <= m <= n * (n - 1), f"arc count must lie in [{n}, {n * (n - 1)}]")
    if lp_feasible is None:
        lp_feasible = _lp_feasible
    for _ in range(GENERATOR_RETRIES):
        order = [int(v) + 1 for v in rng.permutation(n)]
        pairs = {(order[t], order[(t + 1) % n]) for t in range(n)} if n > 2 else {(1, 2), (2, 1)}
        others = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j and (i, j) not in pairs]
        extra = m - len(pairs)
        if extra > 0:
            pick = rng.choice(len(others), size=extra, replace=False)
            pairs |= {others[int(q)] for q in pick}
        comm = []
        for _k in range(nk):
            o, dest = (int(v) + 1 for v in rng.choice(n, size=2, replace=False))
            comm.append((o, dest, int(rng.integers(5, 21))))
        arcs = []
        for (i, j) in sorted(pairs):
            arcs.append((i, j, int(rng.integers(1, 11)), int(rng.integers(20, 101)), int(rng.integers(10, 41))))
        inst = McndInstance(n, tuple(arcs), tuple(comm))
        if lp_feasible(inst):
            return inst
    raise InfeasibleDraw(f"no feasible MCND draw in {GENERATOR_RETRIES} attempts")


def _lp_feasible(inst) -> bool:
    from ..solver import INFEASIBLE, solve_lp
    return solve_lp(relax(build_model(inst, with_symbols=False))).status != INFEASIBLE


def flow_cost_with(inst: McndInstance, open_arcs) -> float | None:
    """Optimal flow cost when exactly ``open_arcs`` are usable; ``None`` if infeasible."""
    from ..solver import INFEASIBLE, solve_lp
    model = relax(build_model(inst, with_symbols=False))
    opened = set(open_arcs)
    model = fix_assignment(model, {("y", a): (1.0 if a in opened else 0.0) for a in inst.arc_pairs()})
    res = solve_lp(model)
    if res.status == INFEASIBLE:
        return None
    fixed = inst.arc_data("f")
    return res.objective - sum(fixed[a] for a in opened), res.incumbent


def brute_force(inst: McndInstance):
    """Enumerate open-arc subsets in order of fixed cost, one LP per subset.

    Opening an arc only lowers flow cost, so the all-open flow cost bounds
    flow cost from below; enumeration stops once fixed cost plus that bound
    cannot beat the incumbent.
    """
    A = inst.arc_pairs()
    if len(A) > ORACLE_MAX_ARCS:
        raise TooLargeForOracle(f"MCND oracle limited to |A| <= {ORACLE_MAX_ARCS}")
    fixed = inst.arc_data("f")
    base = flow_cost_with(inst, A)
    if base is None:
        raise InfeasibleDraw("instance infeasible even with every arc open")
    floor = base[0]
    subsets = []
    for r in range(len(A) + 1):
        for combo in itertools.combinations(A, r):
            subsets.append((sum(fixed[a] for a in combo), combo))
    subsets.sort(key=lambda t: (t[0], t[1]))
    best, best_sol = float("inf"), None
    infeasible: list[frozenset] = []
    for fcost, combo in subsets:
        if fcost + floor >= best - 1e-9:
            break
        cs = frozenset(combo)
        if any(cs <= bad for bad in infeasible):
            continue
        out = flow_cost_with(inst, combo)
        if out is None:
            infeasible.append(cs)
            continue
        total = fcost + out[0]
        if total < best - 1e-9:
            best, best_sol = total, out[1]
    sol = {k: v for k, v in best_sol.items()}
    return best, canonicalize(inst, sol)


def canonicalize(inst: McndInstance, values: dict) -> dict:
    """Round y, clip tiny negative flows."""
    out = {}
    for k, v in values.items():
        if k[0] == "y":
            out[k] = float(round(v))
        elif k[0] == "x":
            out[k] = 0.0 if v < 1e-9 else float(v)
        else:
            out[k] = v
    return out


def describe() -> str:
    return (
        "Multi-commodity capacitated fixed-charge network design.\n"
        "min sum_{(i,j),k} c[i,j] x[i,j,k] + sum_{(i,j)} f[i,j] y[i,j]\n"
        "s.t. sum_{j:(i,j) in A} x[i,j,k] = d[k] for i = Ok[k]\n"
        "     sum_{j:(j,i) in A} x[j,i,k] = d[k] for i = Dk[k]\n"
        "     outflow - inflow of k = 0 at every other node\n"
        "     sum_k x[i,j,k] <= u[i,j] y[i,j] for all (i,j) in A\n"
        "     x >= 0 continuous; y binary"
    )
