"""Native builders for the reference cut family of each benchmark problem.

These are the oracle side of the DSL equivalence tests and the seed material
of the mock agent.  Each builder returns plain :class:`LinConstraint` rows;
:func:`accelcut.milp.append_cut_constraints` tags them when they are added to
a model.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .milp import GE, LE, LinConstraint
from .problems import ProblemInstance
from .problems.base import ProblemError
from .problems.cwlp import CwlpBounds, UncoverableDemand, mincover, warehouse_bounds  # noqa: F401
from .problems.jssp import JsspBounds, makespan_bounds
from .problems.mcnd import umax
from .problems.rect import intervals


class NoIncomingArc(ProblemError):
    pass


def tsp_ec(inst) -> list:
    """Depot-linking rows on top of the MTZ positions (cities 1..n, depot 1)."""
    n = inst.n
    rows = []
    for j in range(2, n + 1):
        # u_j <= 2 + (n-2)(1 - x_1j)
        rows.append(LinConstraint.build({("u", (j,)): 1.0, ("x", (1, j)): float(n - 2)}, LE, n))
    for i in range(2, n + 1):
        # u_i >= n - (n-2)(1 - x_i1)
        rows.append(LinConstraint.build({("u", (i,)): 1.0, ("x", (i, 1)): -float(n - 2)}, GE, 2))
    for i in range(2, n + 1):
        for j in range(2, n + 1):
            if i == j:
                continue
            # x_j1 + x_ji + (u_j - u_i - 1) <= (n-1)(2 - x_1i - x_ij)
            rows.append(LinConstraint.build(
                {("x", (j, 1)): 1.0, ("x", (j, i)): 1.0, ("u", (j,)): 1.0, ("u", (i,)): -1.0,
                 ("x", (1, i)): float(n - 1), ("x", (i, j)): float(n - 1)},
                LE, 2 * (n - 1) + 1))
    return rows


def mcnd_ec(inst) -> list:
    """One row per commodity over the arcs entering its destination."""
    cap = inst.arc_data("u")
    um = umax(inst)
    rows = []
    for k, (_, dest, d) in enumerate(inst.commodities, start=1):
        ins = inst.inarcs(dest)
        if not ins:
            raise NoIncomingArc(f"destination {dest} of commodity {k} has no incoming arc")
        rows.append(LinConstraint.build({("y", a): cap[a] + um[k] for a in ins}, GE, float(d) + um[k]))
    return rows


def cwlp_ec(inst) -> list:
    """Sum of open warehouses >= max(k_crit, k_dem, k_T)."""
    b = warehouse_bounds(inst)
    J = range(1, inst.n_warehouses + 1)
    return [LinConstraint.build({("y", (j,)): 1.0 for j in J}, GE, b.k_min)]


def jssp_ec(inst) -> list:
    """Cmax >= max(average machine load, max one-machine bound, max job interference bound)."""
    b = makespan_bounds(inst)
    return [LinConstraint.build({("Cmax", ()): 1.0}, GE, b.bound)]


def rect_ec(inst) -> list:
    """Break rows coupling each hole to strip ends/starts next to it."""
    N = inst.N
    I = intervals(N)
    rows = []

    def hole_le(i, j, var, row, pred):
        coefs = {(var, (row, a, b)): -1.0 for (a, b) in I if pred(a, b)}
        coefs[("h", (i, j))] = 1.0
        rows.append(LinConstraint.build(coefs, LE, 0))

    for i in range(1, N + 1):
        for j in range(2, N + 1):
            hole_le(i, j, "t", i, lambda a, b, j=j: b == j - 1)
    for i in range(1, N + 1):
        for j in range(1, N):
            hole_le(i, j, "s", i, lambda a, b, j=j: a == j + 1)
    for j in range(1, N + 1):
        hole_le(1, j, "s", 2, lambda a, b, j=j: a <= j <= b)
    for j in range(1, N + 1):
        hole_le(N, j, "t", N - 1, lambda a, b, j=j: a <= j <= b)
    for i in range(2, N):
        for j in range(1, N + 1):
            hole_le(i, j, "t", i - 1, lambda a, b, j=j: a <= j <= b)
    for i in range(2, N):
        for j in range(1, N + 1):
            hole_le(i, j, "s", i + 1, lambda a, b, j=j: a <= j <= b)
    return rows


NATIVE = {"tsp": tsp_ec, "mcnd": mcnd_ec, "cwlp": cwlp_ec, "jssp": jssp_ec, "rect": rect_ec}


def native_rows(inst: ProblemInstance) -> list:
    return NATIVE[inst.kind](inst.payload)


@dataclass(frozen=True)
class DerivedConstants:
    """Precomputed constants the reference families are stated in."""

    kind: str
    values: dict


def derived_constants(inst: ProblemInstance) -> DerivedConstants:
    p = inst.payload
    if inst.kind == "tsp":
        vals = {"n": p.n}
    elif inst.kind == "mcnd":
        vals = {"umax": umax(p)}
    elif inst.kind == "cwlp":
        b = warehouse_bounds(p)
        vals = {"k_crit": b.k_crit, "k_dem": b.k_dem, "k_T": b.k_T, "k_min": b.k_min}
    elif inst.kind == "jssp":
        b: JsspBounds = makespan_bounds(p)
        vals = {"head": b.head, "tail": b.tail, "L": b.L, "load": b.load, "CP": b.CP,
                "Interf": b.Interf, "avg_load": b.avg_load, "bound": b.bound}
    else:
        vals = {}
    return DerivedConstants(inst.kind, vals)


def builtin_cut_source(kind: str) -> str:
    """Text of the shipped ``<kind>_ec.cut`` file."""
    return resources.files("accelcut.cuts.builtin").joinpath(f"{kind}_ec.cut").read_text()


def builtin_cut_path(kind: str):
    return resources.files("accelcut.cuts.builtin").joinpath(f"{kind}_ec.cut")
