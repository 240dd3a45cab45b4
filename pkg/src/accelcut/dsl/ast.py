"""Syntax tree of the cut language.

Every node carries a source :class:`Span` that is excluded from equality, so
two trees compare equal exactly when they are structurally identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int = 0
    end_col: int = 0

    def __str__(self):
        return f"line {self.line}, column {self.col}"


NOSPAN = Span(0, 0)


def _span():
    return field(default=NOSPAN, compare=False, repr=False)


# ---- numeric / linear expressions -------------------------------------

@dataclass(frozen=True)
class Num:
    value: float
    span: Span = _span()


@dataclass(frozen=True)
class Ref:
    """``name`` or ``name[i1, ..., ik]``; ``indices`` is None without brackets."""

    name: str
    indices: tuple | None = None
    span: Span = _span()


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * /
    left: object
    right: object
    span: Span = _span()


@dataclass(frozen=True)
class Neg:
    operand: object
    span: Span = _span()


@dataclass(frozen=True)
class Agg:
    """``op(binders [if cond] : body)``; ``target`` is mincover's second argument."""

    op: str  # sum | min | max | count | mincover
    binders: tuple
    cond: object
    body: object
    target: object = None
    span: Span = _span()


@dataclass(frozen=True)
class ListAgg:
    op: str  # min | max
    args: tuple
    span: Span = _span()


@dataclass(frozen=True)
class Card:
    set: object
    span: Span = _span()


@dataclass(frozen=True)
class TupleLit:
    items: tuple
    span: Span = _span()


# ---- sets -------------------------------------------------------------

@dataclass(frozen=True)
class SetName:
    name: str
    span: Span = _span()


@dataclass(frozen=True)
class SetCall:
    name: str
    args: tuple
    span: Span = _span()


@dataclass(frozen=True)
class SetLit:
    items: tuple
    span: Span = _span()


@dataclass(frozen=True)
class SetRange:
    lo: object
    hi: object
    span: Span = _span()


@dataclass(frozen=True)
class SetDiff:
    left: object
    right: object
    span: Span = _span()


@dataclass(frozen=True)
class Binder:
    """``name in set`` or ``(n1, ..., nk) in set``."""

    names: tuple
    pattern: bool
    set: object
    span: Span = _span()


# ---- conditions -------------------------------------------------------

@dataclass(frozen=True)
class Cmp:
    op: str  # < <= > >= == !=
    left: object
    right: object
    span: Span = _span()


@dataclass(frozen=True)
class In:
    item: object
    set: object
    negated: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class And:
    left: object
    right: object
    span: Span = _span()


@dataclass(frozen=True)
class Or:
    left: object
    right: object
    span: Span = _span()


@dataclass(frozen=True)
class Not:
    operand: object
    span: Span = _span()


@dataclass(frozen=True)
class Truth:
    """A bare numeric expression used as a condition: true when nonzero."""

    expr: object
    span: Span = _span()


# ---- top level --------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    kind: str  # binary | continuous
    lo: object = None
    hi: object = None
    span: Span = _span()


@dataclass(frozen=True)
class AuxDecl:
    name: str
    binders: tuple
    cond: object
    domain: Domain
    span: Span = _span()


@dataclass(frozen=True)
class Constraint:
    binders: tuple
    cond: object
    lhs: object
    rel: str  # <= >= ==
    rhs: object
    span: Span = _span()


@dataclass(frozen=True)
class CutFile:
    aux: tuple
    constraints: tuple
    span: Span = _span()


def children(node):
    """Direct child nodes (for generic traversals)."""
    out = []
    for name in getattr(node, "__dataclass_fields__", {}):
        if name == "span":
            continue
        val = getattr(node, name)
        if isinstance(val, tuple):
            out.extend(v for v in val if hasattr(v, "__dataclass_fields__"))
        elif hasattr(val, "__dataclass_fields__"):
            out.append(val)
    return out


def walk(node):
    yield node
    for ch in children(node):
        yield from walk(ch)
