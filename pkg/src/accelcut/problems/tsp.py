"""Travelling salesman problem, Miller-Tucker-Zemlin formulation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..milp import (BINARY, CONTINUOUS_BOUNDED, EQ, LE, Domain, LinConstraint, MilpModel,
                    Objective, VarDef, linear_terms)
from ..symbols import SymbolTable
from .base import TooLargeForOracle, as_int, check

KIND = "tsp"
ORACLE_MAX_N = 9


@dataclass(frozen=True)
class TspInstance:
    n: int
    cost: tuple  # n x n, cost[i-1][j-1] = c_ij
    coords: tuple | None = None

    def to_json(self):
        return {"n": self.n, "cost": [list(map(as_int, row)) for row in self.cost],
                "coords": None if self.coords is None else [list(map(as_int, p)) for p in self.coords]}

    @classmethod
    def from_json(cls, obj):
        coords = obj.get("coords")
        return cls(int(obj["n"]), tuple(tuple(r) for r in obj["cost"]),
                   None if coords is None else tuple(tuple(p) for p in coords))

    def cost_array(self) -> np.ndarray:
        return np.asarray(self.cost, dtype=np.float64)


def validate(inst: TspInstance) -> None:
    check(inst.n >= 3, f"TSP needs n >= 3, got {inst.n}")
    check(len(inst.cost) == inst.n and all(len(r) == inst.n for r in inst.cost),
          "cost matrix must be n x n")
    for i in range(inst.n):
        check(inst.cost[i][i] == 0, "cost matrix diagonal must be zero")
        for j in range(inst.n):
            check(inst.cost[i][j] >= 0 and math.isfinite(inst.cost[i][j]), "costs must be finite and >= 0")


def euclidean_costs(coords) -> tuple:
    """Nearest-integer Euclidean distances (TSPLIB ``nint`` convention)."""
    pts = np.asarray(coords, dtype=np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    return tuple(tuple(int(v) for v in row) for row in np.floor(dist + 0.5))


def generate(size: dict, rng: np.random.Generator) -> TspInstance:
    n = int(size["n"])
    coords = rng.integers(0, 1001, size=(n, 2))
    pts = tuple(tuple(int(v) for v in p) for p in coords)
    return TspInstance(n, euclidean_costs(pts), pts)


def arcs(n: int) -> list:
    return [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]


def build_model(inst: TspInstance) -> MilpModel:
    n = inst.n
    V = list(range(1, n + 1))
    A = arcs(n)
    x = VarDef("x", 2, Domain(BINARY), tuple(A))
    u = VarDef("u", 1, Domain(CONTINUOUS_BOUNDED, 1.0, float(n)), tuple((i,) for i in V),
               bounds={(1,): (1.0, 1.0)})
    rows = []
    for i in V:
        rows.append(LinConstraint.build({("x", (i, j)): 1.0 for j in V if j != i}, EQ, 1, label="out"))
    for j in V:
        rows.append(LinConstraint.build({("x", (i, j)): 1.0 for i in V if i != j}, EQ, 1, label="in"))
    for i in V[1:]:
        for j in V[1:]:
            if i != j:
                rows.append(LinConstraint.build(
                    {("u", (i,)): 1.0, ("u", (j,)): -1.0, ("x", (i, j)): float(n)}, LE, n - 1, label="mtz"))
    obj = Objective("min", linear_terms({("x", a): float(inst.cost[a[0] - 1][a[1] - 1]) for a in A}))
    return MilpModel((x, u), tuple(rows), obj, symbol_table(inst))


def symbol_table(inst: TspInstance) -> SymbolTable:
    n = inst.n
    st = SymbolTable()
    st.add_set("V", range(1, n + 1), "cities; city 1 is the depot")
    st.add_set("A", arcs(n), "directed arcs (i,j), i != j")
    st.add_param("n", n, doc="number of cities")
    st.add_param("c", {a: float(inst.cost[a[0] - 1][a[1] - 1]) for a in arcs(n)}, 2, "travel cost i -> j")
    st.add_var("x", 2, "x[i,j] = 1 iff the tour goes from i directly to j (binary)")
    st.add_var("u", 1, "u[i] in [1,n]: MTZ position of city i, u[1] = 1 (continuous)")
    return st


def tour_solution(n: int, tour) -> dict:
    """Variable values for a tour given as a 1-based city sequence starting at city 1."""
    tour = list(tour)
    vals = {("x", a): 0.0 for a in arcs(n)}
    for k in range(n):
        vals[("x", (tour[k], tour[(k + 1) % n]))] = 1.0
    for pos, city in enumerate(tour, start=1):
        vals[("u", (city,))] = float(pos)
    return vals


def tour_cost(inst: TspInstance, tour) -> float:
    tour = list(tour)
    return float(sum(inst.cost[tour[k] - 1][tour[(k + 1) % inst.n] - 1] for k in range(inst.n)))


def brute_force(inst: TspInstance):
    if inst.n > ORACLE_MAX_N:
        raise TooLargeForOracle(f"TSP oracle limited to n <= {ORACLE_MAX_N}")
    best, perm = kernels.tsp_best_tour(inst.cost_array())
    tour = [int(c) + 1 for c in perm]
    return best, tour_solution(inst.n, tour)


def canonicalize(inst: TspInstance, values: dict) -> dict:
    """Replace MTZ positions by the tour order read off the arc variables."""
    n = inst.n
    succ = {}
    for (i, j) in arcs(n):
        if values.get(("x", (i, j)), 0.0) > 0.5:
            succ[i] = j
    tour, city = [1], succ.get(1)
    while city is not None and city != 1 and len(tour) <= n:
        tour.append(city)
        city = succ.get(city)
    if len(tour) != n or city != 1:
        return dict(values)
    out = dict(values)
    for pos, c in enumerate(tour, start=1):
        out[("u", (c,))] = float(pos)
    return out


def describe() -> str:
    return (
        "Asymmetric-arc TSP with Miller-Tucker-Zemlin subtour elimination.\n"
        "min sum_{(i,j) in A} c[i,j] x[i,j]\n"
        "s.t. sum_{j != i} x[i,j] = 1 for all i in V; sum_{i != j} x[i,j] = 1 for all j in V\n"
        "     u[i] - u[j] + n x[i,j] <= n - 1 for all i, j in V \\ {1}, i != j\n"
        "     x binary; 1 <= u[i] <= n; u[1] = 1"
    )
