"""Rectangle tiling of an N x N grid leaving exactly one hole per row and column.

Interval-times-flow model: on every row each covered cell belongs to exactly
one active column interval ``(a, b)``; vertical runs of an interval form the
rectangles, and the start markers ``s`` count them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..milp import BINARY, EQ, Domain, LinConstraint, MilpModel, Objective, VarDef, linear_terms
from ..symbols import SymbolTable
from .base import TooLargeForOracle, check

KIND = "rect"
ORACLE_MAX_N = 4
ORACLE_SECONDS = 120.0
# the oracle for this problem is a long solver run, not an enumeration
SOLVER_ORACLE = True


@dataclass(frozen=True)
class RectInstance:
    N: int

    def to_json(self):
        return {"N": self.N}

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["N"]))


def validate(inst: RectInstance) -> None:
    check(inst.N >= 2, f"grid side must be >= 2, got {inst.N}")


def intervals(N: int) -> list:
    return [(a, b) for a in range(1, N + 1) for b in range(a, N + 1)]


def build_model(inst: RectInstance) -> MilpModel:
    N = inst.N
    R = range(1, N + 1)
    I = intervals(N)
    rib = tuple((i, a, b) for i in R for (a, b) in I)
    h = VarDef("h", 2, Domain(BINARY), tuple((i, j) for i in R for j in R))
    x = VarDef("x", 3, Domain(BINARY), rib)
    s = VarDef("s", 3, Domain(BINARY), rib)
    t = VarDef("t", 3, Domain(BINARY), rib)
    rows = []
    for i in R:
        rows.append(LinConstraint.build({("h", (i, j)): 1.0 for j in R}, EQ, 1, label="row_hole"))
    for j in R:
        rows.append(LinConstraint.build({("h", (i, j)): 1.0 for i in R}, EQ, 1, label="col_hole"))
    for i in R:
        for j in R:
            coefs = {("x", (i, a, b)): 1.0 for (a, b) in I if a <= j <= b}
            coefs[("h", (i, j))] = 1.0
            rows.append(LinConstraint.build(coefs, EQ, 1, label="cover"))
    for (a, b) in I:
        rows.append(LinConstraint.build({("x", (1, a, b)): 1.0, ("s", (1, a, b)): -1.0}, EQ, 0, label="top"))
    for i in range(2, N + 1):
        for (a, b) in I:
            rows.append(LinConstraint.build({("x", (i, a, b)): 1.0, ("x", (i - 1, a, b)): -1.0,
                                             ("s", (i, a, b)): -1.0, ("t", (i - 1, a, b)): 1.0},
                                            EQ, 0, label="mid"))
    for (a, b) in I:
        rows.append(LinConstraint.build({("x", (N, a, b)): 1.0, ("t", (N, a, b)): -1.0}, EQ, 0, label="bottom"))
    obj = Objective("min", linear_terms({("s", k): 1.0 for k in rib}))
    return MilpModel((h, x, s, t), tuple(rows), obj, symbol_table(inst))


def symbol_table(inst: RectInstance) -> SymbolTable:
    N = inst.N
    st = SymbolTable()
    st.add_set("R", range(1, N + 1), "rows")
    st.add_set("C", range(1, N + 1), "columns")
    st.add_set("I", intervals(N), "column intervals (a,b), a <= b")
    st.add_param("N", N, doc="grid side length")
    st.add_var("h", 2, "h[i,j] = 1 iff cell (i,j) is the hole of row i and column j (binary)")
    st.add_var("x", 3, "x[i,a,b] = 1 iff row i has columns a..b covered by one tile (binary)")
    st.add_var("s", 3, "s[i,a,b] = 1 iff a vertical strip of interval (a,b) starts at row i (binary)")
    st.add_var("t", 3, "t[i,a,b] = 1 iff a vertical strip of interval (a,b) ends at row i (binary)")
    return st


def generate(size: dict, rng: np.random.Generator | None = None) -> RectInstance:
    return RectInstance(int(size["N"]))


def brute_force(inst: RectInstance):
    """Solver-backed oracle (flagged as such): long-budget MILP solve."""
    if inst.N > ORACLE_MAX_N:
        raise TooLargeForOracle(f"tiling oracle limited to N <= {ORACLE_MAX_N}")
    from ..solver import OPTIMAL, BackendError, SolveBudget, solve_mip
    res = solve_mip(build_model(inst), SolveBudget(ORACLE_SECONDS, gap_target=1e-9))
    if res.status != OPTIMAL:
        raise BackendError(f"tiling oracle did not prove optimality ({res.status})")
    return round(res.objective), canonicalize(inst, res.incumbent)


def canonicalize(inst: RectInstance, values: dict) -> dict:
    return {k: float(round(v)) for k, v in values.items()}


def describe() -> str:
    return (
        "Tile an N x N grid with axis-aligned rectangles, one uncovered cell per row and column;\n"
        "minimise the number of tiles.  Intervals I = {(a,b): 1 <= a <= b <= N}.\n"
        "min sum_{i,(a,b)} s[i,a,b]\n"
        "s.t. sum_j h[i,j] = 1 (each row); sum_i h[i,j] = 1 (each column)\n"
        "     sum_{(a,b): a <= j <= b} x[i,a,b] + h[i,j] = 1 for every cell\n"
        "     x[1,a,b] - s[1,a,b] = 0; x[N,a,b] - t[N,a,b] = 0\n"
        "     x[i,a,b] - x[i-1,a,b] - s[i,a,b] + t[i-1,a,b] = 0 for i = 2..N\n"
        "     all variables binary"
    )
