"""Capacitated warehouse location with single-source assignment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..milp import BINARY, EQ, LE, Domain, LinConstraint, MilpModel, Objective, VarDef, linear_terms
from ..symbols import SymbolTable
from .base import ProblemError, TooLargeForOracle, as_int, check

KIND = "cwlp"
ORACLE_MAX_CELLS = 12
CAPACITY_SLACK = 1.3


class UncoverableDemand(ProblemError):
    pass


@dataclass(frozen=True)
class CwlpInstance:
    d: tuple  # demand per customer
    u: tuple  # capacity per warehouse
    f: tuple  # fixed opening cost per warehouse
    c: tuple  # c[i][j] cost of serving all of customer i from warehouse j

    def to_json(self):
        return {"d": list(map(as_int, self.d)), "u": list(map(as_int, self.u)),
                "f": list(map(as_int, self.f)), "c": [list(map(as_int, r)) for r in self.c]}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(obj["d"]), tuple(obj["u"]), tuple(obj["f"]), tuple(tuple(r) for r in obj["c"]))

    @property
    def n_customers(self):
        return len(self.d)

    @property
    def n_warehouses(self):
        return len(self.u)


def validate(inst: CwlpInstance) -> None:
    check(inst.n_customers >= 1 and inst.n_warehouses >= 1, "need customers and warehouses")
    check(all(v > 0 for v in inst.d), "demands must be > 0")
    check(all(v > 0 for v in inst.u), "capacities must be > 0")
    check(all(v >= 0 for v in inst.f), "fixed costs must be >= 0")
    check(len(inst.f) == inst.n_warehouses, "f must have one entry per warehouse")
    check(len(inst.c) == inst.n_customers and all(len(r) == inst.n_warehouses for r in inst.c),
          "c must be |I| x |J|")
    check(sum(inst.u) >= sum(inst.d), "total capacity below total demand")


def mincover(values, target: float) -> int:
    """Fewest of the largest ``values`` whose sum reaches ``target``."""
    if target <= 0:
        return 0
    acc = 0.0
    for r, v in enumerate(sorted(values, reverse=True), start=1):
        acc += v
        if acc >= target - 1e-9:
            return r
    raise UncoverableDemand(f"values sum to {acc} < {target}")


@dataclass(frozen=True)
class CwlpBounds:
    k_crit: int
    k_dem: int
    k_T: int

    @property
    def k_min(self) -> int:
        return max(self.k_crit, self.k_dem, self.k_T)


def warehouse_bounds(inst: CwlpInstance) -> CwlpBounds:
    """Lower bounds on the number of open warehouses.

    ``k_crit`` counts customers too big to share the largest warehouse,
    ``k_dem`` is the fewest largest warehouses covering total demand and
    ``k_T`` the fewest large warehouses (those able to hold any single
    customer) covering the customers that fit nowhere else.  When every
    warehouse is large the "fits elsewhere" threshold is minus infinity.
    """
    umax = max(inst.u)
    dmax = max(inst.d)
    k_crit = sum(1 for v in inst.d if v > 0.5 * umax)
    k_dem = mincover(inst.u, sum(inst.d))
    T = [j for j, v in enumerate(inst.u) if v >= dmax]
    small = [v for j, v in enumerate(inst.u) if j not in T]
    thresh = max(small) if small else -math.inf
    need = sum(v for v in inst.d if v > thresh)
    k_T = mincover([inst.u[j] for j in T], need)
    return CwlpBounds(k_crit, k_dem, k_T)


def build_model(inst: CwlpInstance) -> MilpModel:
    I = range(1, inst.n_customers + 1)
    J = range(1, inst.n_warehouses + 1)
    x = VarDef("x", 2, Domain(BINARY), tuple((i, j) for i in I for j in J))
    y = VarDef("y", 1, Domain(BINARY), tuple((j,) for j in J))
    rows = []
    for i in I:
        rows.append(LinConstraint.build({("x", (i, j)): 1.0 for j in J}, EQ, 1, label="assign"))
    for j in J:
        coefs = {("x", (i, j)): float(inst.d[i - 1]) for i in I}
        coefs[("y", (j,))] = -float(inst.u[j - 1])
        rows.append(LinConstraint.build(coefs, LE, 0, label="capacity"))
    terms = {("y", (j,)): float(inst.f[j - 1]) for j in J}
    terms.update({("x", (i, j)): float(inst.c[i - 1][j - 1]) for i in I for j in J})
    return MilpModel((x, y), tuple(rows), Objective("min", linear_terms(terms)), symbol_table(inst))


def symbol_table(inst: CwlpInstance) -> SymbolTable:
    I = list(range(1, inst.n_customers + 1))
    J = list(range(1, inst.n_warehouses + 1))
    st = SymbolTable()
    st.add_set("I", I, "customers")
    st.add_set("J", J, "candidate warehouses")
    st.add_param("d", {i: float(inst.d[i - 1]) for i in I}, 1, "demand of customer i")
    st.add_param("u", {j: float(inst.u[j - 1]) for j in J}, 1, "capacity of warehouse j")
    st.add_param("f", {j: float(inst.f[j - 1]) for j in J}, 1, "fixed cost to open warehouse j")
    st.add_param("c", {(i, j): float(inst.c[i - 1][j - 1]) for i in I for j in J}, 2,
                 "cost of serving all of customer i from warehouse j")
    st.add_param("D", float(sum(inst.d)), doc="total demand")
    try:
        b = warehouse_bounds(inst)
    except UncoverableDemand:
        b = None
    if b is not None:
        st.add_param("k_crit", b.k_crit, doc="customers with d[i] > max_j u[j] / 2")
        st.add_param("k_dem", b.k_dem, doc="fewest largest warehouses covering D")
        st.add_param("k_T", b.k_T, doc="fewest large warehouses covering customers that fit nowhere else")
        st.add_param("k_min", b.k_min, doc="max(k_crit, k_dem, k_T)")
    st.add_var("x", 2, "x[i,j] = 1 iff customer i is served by warehouse j (binary)")
    st.add_var("y", 1, "y[j] = 1 iff warehouse j is open (binary)")
    return st


def ffd_feasible(d, u) -> bool:
    """First-fit decreasing packing into the largest bins first (a sufficient test)."""
    loads = sorted(u, reverse=True)
    free = list(loads)
    for v in sorted(d, reverse=True):
        for k in range(len(free)):
            if free[k] >= v:
                free[k] -= v
                break
        else:
            return False
    return True


def generate(size: dict, rng: np.random.Generator) -> CwlpInstance:
    """Random planar instance, capacities scaled to at least 1.3x total demand."""
    ni = int(size["customers"])
    nj = int(size["warehouses"])
    check(ni >= 1 and nj >= 1, "size must be positive")
    d = rng.integers(5, 36, size=ni)
    u = rng.integers(20, 81, size=nj).astype(float)
    total = float(d.sum())
    scale = max(1.0, CAPACITY_SLACK * total / u.sum())
    u = np.ceil(u * scale)
    if u.max() < d.max():
        u[int(np.argmax(u))] = float(d.max())
    while not ffd_feasible(d.tolist(), u.tolist()):
        u = np.ceil(u * 1.1)
    f = rng.integers(50, 201, size=nj)
    cust = rng.uniform(0, 100, size=(ni, 2))
    wh = rng.uniform(0, 100, size=(nj, 2))
    dist = np.sqrt(((cust[:, None, :] - wh[None, :, :]) ** 2).sum(axis=2))
    c = np.rint(dist * d[:, None] / 10.0)
    return CwlpInstance(tuple(int(v) for v in d), tuple(int(v) for v in u), tuple(int(v) for v in f),
                        tuple(tuple(int(v) for v in row) for row in c))


def brute_force(inst: CwlpInstance):
    best, assign, _ = _enumerate(inst)
    return best, assignment_solution(inst, assign)


def min_open(inst: CwlpInstance) -> int:
    """Fewest open warehouses over all feasible single-source assignments."""
    return _enumerate(inst)[2]


def _enumerate(inst):
    if inst.n_customers * inst.n_warehouses > ORACLE_MAX_CELLS:
        raise TooLargeForOracle(f"CWLP oracle limited to |I|*|J| <= {ORACLE_MAX_CELLS}")
    best, assign, mo = kernels.cwlp_best_assignment(inst.d, inst.u, inst.f, inst.c)
    if not math.isfinite(best):
        raise UncoverableDemand("no feasible single-source assignment")
    return best, [int(a) + 1 for a in assign], mo


def assignment_solution(inst: CwlpInstance, assign) -> dict:
    """Variable values for a 1-based customer -> warehouse assignment."""
    vals = {}
    used = set(assign)
    for i in range(1, inst.n_customers + 1):
        for j in range(1, inst.n_warehouses + 1):
            vals[("x", (i, j))] = 1.0 if assign[i - 1] == j else 0.0
    for j in range(1, inst.n_warehouses + 1):
        vals[("y", (j,))] = 1.0 if j in used else 0.0
    return vals


def canonicalize(inst: CwlpInstance, values: dict) -> dict:
    return {k: float(round(v)) for k, v in values.items()}


def describe() -> str:
    return (
        "Capacitated warehouse location, single-source assignment.\n"
        "min sum_j f[j] y[j] + sum_{i,j} c[i,j] x[i,j]\n"
        "s.t. sum_j x[i,j] = 1 for all i in I\n"
        "     sum_i d[i] x[i,j] <= u[j] y[j] for all j in J\n"
        "     x, y binary"
    )
