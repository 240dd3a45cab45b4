"""The cut language: parsing, checking, hashing and instantiation.

Typical use::

    fam = parse(source)
    checked = check(fam, problems.symbol_table(inst), inst.kind)
    rows, aux = instantiate(checked, inst)
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from . import ast
from .parser import ParseError, extract_idea, parse_ast, tokenize  # noqa: F401
from .printer import canonical_form, to_source
from .semantics import (CheckedCut, CheckFailed, EvalError, SemanticError,  # noqa: F401
                        diagnose, instantiate_with, snap)
from .semantics import check as _check


@dataclass(frozen=True)
class CutFamily:
    """Parsed cut source plus its idea string; ``family_id`` is the structural hash."""

    source_text: str
    ast: ast.CutFile = field(repr=False)
    idea: str
    family_id: str


def canonical_hash(family) -> str:
    """16-hex-digit sha256 prefix of the normalised tree.

    Accepts a :class:`CutFamily` or a bare :class:`ast.CutFile`.
    """
    tree = family.ast if isinstance(family, CutFamily) else family
    return hashlib.sha256(canonical_form(tree).encode()).hexdigest()[:16]


def parse(source_text: str) -> CutFamily:
    tree = parse_ast(source_text)
    return CutFamily(source_text, tree, extract_idea(source_text), canonical_hash(tree))


def from_ast(tree: ast.CutFile, idea: str = "") -> CutFamily:
    """Build a family from a tree (used by the mock agents); the source is re-rendered."""
    text = to_source(tree, idea or None)
    return CutFamily(text, tree, idea, canonical_hash(tree))


def print_cut(family) -> str:
    if isinstance(family, CutFamily):
        return to_source(family.ast, family.idea or None)
    return to_source(family)


def check(family: CutFamily, st, kind: str | None = None) -> CheckedCut:
    return _check(family, st, kind)


def instantiate(checked: CheckedCut, instance):
    """Expand a checked cut on a concrete :class:`ProblemInstance`.

    Returns ``(rows, aux_vardefs)`` with rows sorted deterministically.
    """
    from .. import problems

    if checked.kind is not None and checked.kind != instance.kind:
        raise EvalError(f"cut was checked for {checked.kind!r}, instance is {instance.kind!r}")
    return instantiate_with(checked, problems.symbol_table(instance), problems.build_model(instance))


def compile_for(source_text: str, instance):
    """parse + check + instantiate in one call (raises the first failing stage's error)."""
    from .. import problems

    fam = parse(source_text)
    checked = check(fam, problems.symbol_table(instance), instance.kind)
    return fam, checked, instantiate(checked, instance)
