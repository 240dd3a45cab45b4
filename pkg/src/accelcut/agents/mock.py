"""Deterministic offline agents.

The initializer walks a corpus built from the shipped builtin family of the
problem and the versioned perturbation table.  Mutation agents apply one
seeded perturbation to their parent; crossover agents join or splice the
parents' constraint lists.  All randomness comes from the caller's RNG.
"""

from __future__ import annotations

import json
from dataclasses import replace
from importlib import resources

from .. import dsl
from ..builtin_cuts import builtin_cut_source
from ..dsl import ast as A
from .prompts import CROSSOVER, INITIALIZER, MUTATION
from .remote import AgentResponse


class CorpusExhausted(Exception):
    pass


def load_table() -> dict:
    return json.loads(resources.files("accelcut.agents").joinpath("perturbations.json").read_text())


TABLE_VERSION = load_table()["version"]


# ---------------------------------------------------------------------
# tree edits; each returns a new CutFile or None when not applicable
# ---------------------------------------------------------------------

def _rows(tree, row):
    n = len(tree.constraints)
    return range(n) if row is None else ([row] if row < n else [])


def _set_rows(tree, updates: dict):
    cons = tuple(updates.get(k, c) for k, c in enumerate(tree.constraints))
    return replace(tree, constraints=cons)


def scale(tree, f, row=None):
    """Multiply the right-hand side of the selected rows by ``f`` (``f == 1`` is the identity)."""
    if f == 1:
        return tree
    idx = _rows(tree, row)
    if not idx:
        return None
    return _set_rows(tree, {k: replace(tree.constraints[k], rhs=A.BinOp("*", A.Num(float(f)),
                                                                          tree.constraints[k].rhs))
                            for k in idx})


def shift(tree, delta, row=None):
    idx = _rows(tree, row)
    if not idx or delta == 0:
        return None
    return _set_rows(tree, {k: replace(tree.constraints[k], rhs=A.BinOp("+", tree.constraints[k].rhs,
                                                                          A.Num(float(delta))))
                            for k in idx})


def narrow(tree, v, row=0):
    """Remove element ``v`` from the first scalar binder of the selected row."""
    if row >= len(tree.constraints):
        return None
    c = tree.constraints[row]
    for k, b in enumerate(c.binders):
        if not b.pattern:
            nb = replace(b, set=A.SetDiff(b.set, A.SetLit((A.Num(float(v)),))))
            binders = c.binders[:k] + (nb,) + c.binders[k + 1:]
            return _set_rows(tree, {row: replace(c, binders=binders)})
    return None


def drop_row(tree, row=0):
    if len(tree.constraints) < 2 or row >= len(tree.constraints):
        return None
    return replace(tree, constraints=tree.constraints[:row] + tree.constraints[row + 1:])


def _rewrite_first(node, pred, fn):
    """Rewrite the first node (pre-order) satisfying ``pred``; returns (new_node, done)."""
    if pred(node):
        return fn(node), True
    if not hasattr(node, "__dataclass_fields__"):
        return node, False
    changes = {}
    for name in node.__dataclass_fields__:
        if name == "span":
            continue
        val = getattr(node, name)
        if isinstance(val, tuple):
            items = list(val)
            for i, item in enumerate(items):
                new, done = _rewrite_first(item, pred, fn)
                if done:
                    items[i] = new
                    changes[name] = tuple(items)
                    return replace(node, **changes), True
        elif hasattr(val, "__dataclass_fields__"):
            new, done = _rewrite_first(val, pred, fn)
            if done:
                return replace(node, **{name: new}), True
    return node, False


def swap_agg(tree, frm, to):
    def pred(n):
        return isinstance(n, (A.Agg, A.ListAgg)) and n.op == frm and not (isinstance(n, A.ListAgg) and to == "sum")

    new, done = _rewrite_first(tree, pred, lambda n: replace(n, op=to))
    return new if done else None


def drop_arg(tree, k):
    def pred(n):
        return isinstance(n, A.ListAgg) and len(n.args) >= 2 and k < len(n.args)

    def fn(n):
        args = n.args[:k] + n.args[k + 1:]
        return args[0] if len(args) == 1 else replace(n, args=args)

    new, done = _rewrite_first(tree, pred, fn)
    return new if done else None


OPS = {"scale": scale, "shift": shift, "narrow": narrow, "drop_row": drop_row, "swap_agg": swap_agg,
       "drop_arg": drop_arg}


def apply_op(tree, spec: dict):
    args = {k: v for k, v in spec.items() if k != "op"}
    if "from" in args:
        args["frm"] = args.pop("from")
    return OPS[spec["op"]](tree, **args)


def describe_op(spec: dict) -> str:
    args = ", ".join(f"{k}={v}" for k, v in spec.items() if k != "op")
    return f"{spec['op']}({args})"


def _rename_aux(tree: A.CutFile, taken: set):
    """Rename aux variables of ``tree`` that clash with ``taken``."""
    mapping = {}
    for d in tree.aux:
        if d.name in taken:
            k = 2
            while f"{d.name}_{k}" in taken:
                k += 1
            mapping[d.name] = f"{d.name}_{k}"
    if not mapping:
        return tree

    def ren(node):
        if isinstance(node, tuple):
            return tuple(ren(x) for x in node)
        if not hasattr(node, "__dataclass_fields__"):
            return node
        changes = {n: ren(getattr(node, n)) for n in node.__dataclass_fields__ if n != "span"}
        if isinstance(node, (A.Ref, A.AuxDecl)) and node.name in mapping:
            changes["name"] = mapping[node.name]
        return replace(node, **changes)

    return ren(tree)


def union(a: A.CutFile, b: A.CutFile) -> A.CutFile:
    b = _rename_aux(b, {d.name for d in a.aux})
    return A.CutFile(a.aux + b.aux, a.constraints + b.constraints)


def splice(a: A.CutFile, b: A.CutFile, rng) -> A.CutFile:
    """A prefix of ``a``'s rows followed by a suffix of ``b``'s rows (both nonempty)."""
    b = _rename_aux(b, {d.name for d in a.aux})
    ka = int(rng.integers(1, len(a.constraints) + 1))
    kb = int(rng.integers(0, len(b.constraints)))
    return A.CutFile(a.aux + b.aux, a.constraints[:ka] + b.constraints[kb:])


# ---------------------------------------------------------------------
# the agent
# ---------------------------------------------------------------------

def _short(idea: str, n: int = 90) -> str:
    idea = " ".join(idea.split())
    return idea if len(idea) <= n else idea[: n - 3] + "..."


def build_corpus(kind: str, table: dict | None = None) -> list:
    """Distinct (tree, idea) pairs: the builtin family and its table variants, in table order."""
    table = table or load_table()
    base = dsl.parse(builtin_cut_source(kind))
    out, seen = [], set()
    for seq in table["initializer"]:
        tree = base.ast
        for op in seq:
            tree = apply_op(tree, op) if tree is not None else None
        if tree is None:
            continue
        h = dsl.canonical_hash(tree)
        if h in seen:
            continue
        seen.add(h)
        idea = _short(base.idea) if not seq else f"{' + '.join(describe_op(o) for o in seq)} of: {_short(base.idea)}"
        out.append((tree, idea))
    return out


class MockAgent:
    """Offline stand-in for every agent spec; state is the initializer cursor only."""

    def __init__(self, kind: str, table: dict | None = None):
        self.kind = kind
        self.table = table or load_table()
        self.corpus = build_corpus(kind, self.table)
        self.cursor = 0

    def state(self) -> dict:
        return {"cursor": self.cursor, "version": self.table["version"]}

    def restore(self, state: dict) -> None:
        self.cursor = int(state.get("cursor", 0))

    def respond(self, spec, ctx, rng) -> AgentResponse:
        if spec.kind == INITIALIZER:
            return self._initial(ctx)
        if spec.kind == MUTATION:
            return self._mutate(spec, ctx, rng)
        if spec.kind == CROSSOVER:
            return self._cross(spec, ctx, rng)
        raise ValueError(spec.kind)

    def _emit(self, tree, idea, note="") -> AgentResponse:
        text = dsl.to_source(tree)
        return AgentResponse(text, idea, raw=json.dumps({"dsl": text, "idea": idea, "mock": note}))

    def _initial(self, ctx):
        seen = set(ctx.prior_ideas)
        while self.cursor < len(self.corpus):
            tree, idea = self.corpus[self.cursor]
            self.cursor += 1
            if idea not in seen:
                return self._emit(tree, idea, "corpus")
        raise CorpusExhausted(f"mock corpus for {self.kind} has {len(self.corpus)} entries, all used")

    def _mutate(self, spec, ctx, rng):
        parent = ctx.parents[0]
        tree = dsl.parse(parent.dsl).ast
        ops = self.table["mutation"][spec.name]
        start = int(rng.integers(0, len(ops)))
        row = int(rng.integers(0, len(tree.constraints)))
        for k in range(len(ops)):
            op = dict(ops[(start + k) % len(ops)])
            if op["op"] in ("narrow", "drop_row") or (op["op"] in ("scale", "shift") and len(tree.constraints) > 1):
                op.setdefault("row", row)
            new = apply_op(tree, op)
            if new is not None:
                return self._emit(new, f"{describe_op(op)} of: {_short(parent.idea)}", spec.name)
        return self._emit(tree, parent.idea, "unchanged")

    def _cross(self, spec, ctx, rng):
        a, b = (dsl.parse(p.dsl).ast for p in ctx.parents)
        modes = self.table["crossover"][spec.name]
        mode = modes[int(rng.integers(0, len(modes)))]
        tree = union(a, b) if mode == "union" else splice(a, b, rng)
        idea = f"{mode} of [{_short(ctx.parents[0].idea, 60)}] and [{_short(ctx.parents[1].idea, 60)}]"
        return self._emit(tree, idea, spec.name)
