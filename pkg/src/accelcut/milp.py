"""Solver-agnostic MILP intermediate representation.

Variables are declared in indexed families (:class:`VarDef`), each concrete
variable instance is identified by ``(name, index_tuple)``.  Models are
immutable; every operation here returns a new :class:`MilpModel`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

INF = math.inf

BINARY = "binary"
INTEGER_NONNEG = "integer_nonneg"
CONTINUOUS_NONNEG = "continuous_nonneg"
CONTINUOUS_BOUNDED = "continuous_bounded"

LE, GE, EQ = "<=", ">=", "=="
RELATIONS = (LE, GE, EQ)

INTEGRALITY_TOL = 1e-6
BOUND_TOL = 1e-6

BASE_ORIGIN = "base"

VarKey = tuple  # (name, index tuple)


class ModelError(Exception):
    pass


class UnknownVariable(ModelError):
    pass


class ValueOutOfDomain(ModelError):
    pass


class NameCollision(ModelError):
    pass


@dataclass(frozen=True)
class Domain:
    kind: str
    lo: float = 0.0
    hi: float = INF

    def __post_init__(self):
        if self.kind == BINARY:
            object.__setattr__(self, "lo", 0.0)
            object.__setattr__(self, "hi", 1.0)
        elif self.kind in (INTEGER_NONNEG, CONTINUOUS_NONNEG):
            object.__setattr__(self, "lo", 0.0)
            object.__setattr__(self, "hi", INF)
        elif self.kind == CONTINUOUS_BOUNDED:
            if not self.lo <= self.hi:
                raise ValueError(f"bounded domain needs lo <= hi, got [{self.lo}, {self.hi}]")
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    @property
    def integer(self) -> bool:
        return self.kind in (BINARY, INTEGER_NONNEG)

    def relaxed(self) -> "Domain":
        if self.kind == BINARY:
            return Domain(CONTINUOUS_BOUNDED, 0.0, 1.0)
        if self.kind == INTEGER_NONNEG:
            return Domain(CONTINUOUS_NONNEG)
        return self

    def to_json(self):
        if self.kind == CONTINUOUS_BOUNDED:
            return [self.kind, self.lo, self.hi]
        return [self.kind]

    @classmethod
    def from_json(cls, obj) -> "Domain":
        if obj[0] == CONTINUOUS_BOUNDED:
            return cls(obj[0], float(obj[1]), float(obj[2]))
        return cls(obj[0])


def binary() -> Domain:
    return Domain(BINARY)


def continuous(lo: float = 0.0, hi: float = INF) -> Domain:
    if lo == 0.0 and hi == INF:
        return Domain(CONTINUOUS_NONNEG)
    return Domain(CONTINUOUS_BOUNDED, lo, hi)


@dataclass(frozen=True)
class VarDef:
    """An indexed family of variables.

    ``indices`` lists every concrete index tuple of the family (``((),)`` for
    a scalar).  ``bounds`` optionally narrows the domain bounds of single
    instances, e.g. a fixed depot position or a value fixed by
    :func:`fix_assignment`.
    """

    name: str
    index_arity: int
    domain: Domain
    indices: tuple
    bounds: Mapping[tuple, tuple] = field(default_factory=dict)

    def __post_init__(self):
        for idx in self.indices:
            if len(idx) != self.index_arity:
                raise ValueError(f"{self.name}{list(idx)}: expected arity {self.index_arity}")

    def bounds_of(self, idx: tuple) -> tuple[float, float]:
        if idx in self.bounds:
            return self.bounds[idx]
        return self.domain.lo, self.domain.hi

    def keys(self):
        return [(self.name, idx) for idx in self.indices]


@dataclass(frozen=True)
class LinConstraint:
    terms: tuple  # ((coef, (name, idx)), ...) sorted by variable identity
    relation: str
    rhs: float
    origin: str = BASE_ORIGIN
    label: str = ""

    @classmethod
    def build(cls, coefs: Mapping | Iterable, relation: str, rhs: float,
              origin: str = BASE_ORIGIN, label: str = "") -> "LinConstraint":
        """Merge duplicate variables, drop zero coefficients, sort terms."""
        if relation not in RELATIONS:
            raise ValueError(f"bad relation {relation!r}")
        acc: dict = {}
        items = coefs.items() if isinstance(coefs, Mapping) else ((k, c) for c, k in coefs)
        for key, coef in items:
            acc[key] = acc.get(key, 0.0) + coef
        terms = []
        for key in sorted(acc):
            coef = float(acc[key])
            if not math.isfinite(coef):
                raise ValueError(f"non-finite coefficient on {key}")
            if coef != 0.0:
                terms.append((coef, key))
        return cls(tuple(terms), relation, float(rhs), origin, label)

    def activity(self, values: Mapping) -> float:
        return sum(c * values[k] for c, k in self.terms)

    def violation(self, values: Mapping) -> float:
        """Positive amount by which ``values`` violate the row (0 when satisfied)."""
        act = self.activity(values)
        if self.relation == LE:
            return max(0.0, act - self.rhs)
        if self.relation == GE:
            return max(0.0, self.rhs - act)
        return abs(act - self.rhs)

    def normalized(self) -> tuple:
        """Relation-normalised form used for row-set comparisons (``>=`` flipped to ``<=``)."""
        if self.relation == GE:
            return tuple((-c, k) for c, k in self.terms), LE, -self.rhs
        return self.terms, self.relation, self.rhs


@dataclass(frozen=True)
class Objective:
    sense: str  # "min" | "max"
    terms: tuple
    constant: float = 0.0

    def value(self, values: Mapping) -> float:
        return self.constant + sum(c * values[k] for c, k in self.terms)


@dataclass(frozen=True)
class MilpModel:
    vars: tuple
    constraints: tuple
    objective: Objective
    symbol_table: Any = None

    def __post_init__(self):
        names = [v.name for v in self.vars]
        if len(set(names)) != len(names):
            raise NameCollision(f"duplicate variable family in {names}")

    @property
    def var_map(self) -> dict:
        return {v.name: v for v in self.vars}

    def var_keys(self) -> list:
        return [k for v in self.vars for k in v.keys()]

    def num_vars(self) -> int:
        return sum(len(v.indices) for v in self.vars)

    def base_rows(self) -> tuple:
        return tuple(c for c in self.constraints if c.origin == BASE_ORIGIN)

    def is_continuous(self) -> bool:
        return not any(v.domain.integer for v in self.vars)

    def validate(self) -> None:
        known = {v.name: (v, set(v.indices)) for v in self.vars}
        for row in self.constraints:
            for _, key in row.terms:
                _resolve(known, key)
        for _, key in self.objective.terms:
            _resolve(known, key)


def _resolve(known, key):
    name, idx = key
    if name not in known:
        raise UnknownVariable(f"unknown variable {name}")
    vdef, idxs = known[name]
    if len(idx) != vdef.index_arity:
        raise UnknownVariable(f"{name}{list(idx)}: arity {len(idx)} != {vdef.index_arity}")
    if idx not in idxs:
        raise UnknownVariable(f"{name}{list(idx)} is not a declared index")
    return vdef


def relax(model: MilpModel) -> MilpModel:
    """Drop integrality: binary -> [0, 1], integer -> continuous nonneg."""
    new_vars = tuple(replace(v, domain=v.domain.relaxed()) for v in model.vars)
    if all(a.domain == b.domain for a, b in zip(new_vars, model.vars)):
        return model
    return replace(model, vars=new_vars)


def fix_assignment(model: MilpModel, values: Mapping, strict_integrality: bool = True) -> MilpModel:
    """Bound each given variable instance to ``[v, v]``; others stay free."""
    known = {v.name: (v, set(v.indices)) for v in model.vars}
    per_family: dict[str, dict] = {}
    for key, val in values.items():
        vdef = _resolve(known, key)
        _, idx = key
        lo, hi = vdef.bounds_of(idx)
        val = float(val)
        if not math.isfinite(val) or val < lo - BOUND_TOL or val > hi + BOUND_TOL:
            raise ValueOutOfDomain(f"{key[0]}{list(idx)} = {val} outside [{lo}, {hi}]")
        if vdef.domain.integer:
            r = round(val)
            if strict_integrality and abs(val - r) > INTEGRALITY_TOL:
                raise ValueOutOfDomain(f"{key[0]}{list(idx)} = {val} is not integral")
            if abs(val - r) <= INTEGRALITY_TOL:
                val = float(r)
        val = min(max(val, lo), hi)
        per_family.setdefault(key[0], {})[idx] = (val, val)
    new_vars = []
    for v in model.vars:
        if v.name in per_family:
            merged = dict(v.bounds)
            merged.update(per_family[v.name])
            v = replace(v, bounds=merged)
        new_vars.append(v)
    return replace(model, vars=tuple(new_vars))


def append_cut_constraints(model: MilpModel, rows: Iterable[LinConstraint],
                           aux: Iterable[VarDef] = (), family_id: str | None = None) -> MilpModel:
    """Return ``model`` plus cut rows (tagged ``cut:<family_id>``) and auxiliary variables."""
    rows = list(rows)
    aux = list(aux)
    if not rows and not aux:
        return model
    base_names = {v.name for v in model.vars}
    if model.symbol_table is not None:
        base_names |= set(model.symbol_table.names())
    seen = set()
    for a in aux:
        if a.name in base_names or a.name in seen:
            raise NameCollision(f"auxiliary variable {a.name!r} collides with an existing name")
        seen.add(a.name)
    known = {v.name: (v, set(v.indices)) for v in list(model.vars) + aux}
    tagged = []
    for row in rows:
        for _, key in row.terms:
            _resolve(known, key)
        origin = row.origin
        if family_id is not None or origin == BASE_ORIGIN:
            origin = f"cut:{family_id or 'anon'}"
        tagged.append(replace(row, origin=origin))
    return replace(model, vars=model.vars + tuple(aux), constraints=model.constraints + tuple(tagged))


def linear_terms(coefs: Mapping) -> tuple:
    """Sorted ``(coef, key)`` pairs with zero coefficients removed."""
    return tuple((float(c), k) for k, c in sorted(coefs.items()) if c != 0)


def _fmt_num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def format_key(key) -> str:
    name, idx = key
    return f"{name}[{','.join(str(i) for i in idx)}]" if idx else name


def dump(model: MilpModel) -> str:
    """Canonical line-oriented text dump, one constraint per line."""
    lines = []
    for v in sorted(model.vars, key=lambda v: v.name):
        lines.append(f"var {v.name}/{v.index_arity} {' '.join(_fmt_num(x) if isinstance(x, float) else str(x) for x in v.domain.to_json())} n={len(v.indices)}")
        for idx in sorted(v.bounds):
            lo, hi = v.bounds[idx]
            lines.append(f"bound {format_key((v.name, idx))} {_fmt_num(lo)} {_fmt_num(hi)}")
    obj = " ".join(f"{_fmt_num(c)}*{format_key(k)}" for c, k in model.objective.terms)
    lines.append(f"{model.objective.sense} {obj} + {_fmt_num(model.objective.constant)}")
    for row in sorted(model.constraints, key=row_sort_key):
        body = " ".join(f"{_fmt_num(c)}*{format_key(k)}" for c, k in row.terms)
        lines.append(f"[{row.origin}] {body} {row.relation} {_fmt_num(row.rhs)}")
    return "\n".join(lines) + "\n"


def row_sort_key(row: LinConstraint):
    return (row.origin, tuple((k, c) for c, k in row.terms), row.relation, row.rhs)


def values_to_json(values: Mapping) -> list:
    return [[k[0], list(k[1]), float(v)] for k, v in sorted(values.items())]


def values_from_json(items) -> dict:
    return {(name, tuple(idx)): float(v) for name, idx, v in items}
