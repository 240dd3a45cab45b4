"""Static checking and instance expansion of parsed cut files."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .. import milp
from ..symbols import PARAM, SET, SETFN, VAR, SymbolTable
from . import ast as A

SNAP_TOL = 1e-9


@dataclass(frozen=True)
class SemanticError:
    message: str
    span: A.Span

    def __str__(self):
        return f"{self.span}: {self.message}"


class CheckFailed(Exception):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(str(e) for e in self.errors))


class EvalError(Exception):
    def __init__(self, message, span: A.Span | None = None):
        self.span = span
        super().__init__(f"{span}: {message}" if span is not None and span.line else message)


# ---------------------------------------------------------------------
# static checking
# ---------------------------------------------------------------------

CONST, LIN = "const", "lin"


@dataclass(frozen=True)
class _Ty:
    kind: str  # CONST | LIN
    width: int = 1


class _Checker:
    def __init__(self, st: SymbolTable):
        self.st = st
        self.errors: list = []
        self.aux: dict = {}  # name -> arity

    def err(self, msg, node):
        self.errors.append(SemanticError(msg, getattr(node, "span", A.NOSPAN)))

    # -- scopes ------------------------------------------------------------

    def bind(self, binders, scope, node):
        scope = dict(scope)
        for b in binders:
            w = self.set_width(b.set, scope)
            if b.pattern:
                if w is not None and w != len(b.names):
                    self.err(f"pattern of {len(b.names)} names over a set of {w}-tuples", b)
                widths = [1] * len(b.names)
            else:
                widths = [w or 1]
            for name, wd in zip(b.names, widths):
                if self.st.get(name) is not None or name in self.aux:
                    self.err(f"binder {name!r} shadows a model symbol", b)
                elif name in scope:
                    self.err(f"binder {name!r} is already bound", b)
                scope[name] = wd
        return scope

    def set_width(self, s, scope):
        if isinstance(s, A.SetName):
            sym = self.st.get(s.name)
            if sym is None:
                self.err(f"unknown set {s.name!r}", s)
                return None
            if sym.kind != SET:
                self.err(f"{s.name!r} is a {sym.kind}, not a set", s)
                return None
            return sym.width
        if isinstance(s, A.SetCall):
            sym = self.st.get(s.name)
            if sym is None:
                self.err(f"unknown set function {s.name!r}", s)
                return None
            if sym.kind != SETFN:
                self.err(f"{s.name!r} is a {sym.kind}, not a set function", s)
                return None
            got = sum(self.const(a, scope, "set function argument").width for a in s.args)
            if got != sym.arity:
                self.err(f"{s.name} takes {sym.arity} argument(s), got {got}", s)
            return sym.width
        if isinstance(s, A.SetLit):
            widths = set()
            for item in s.items:
                if isinstance(item, A.TupleLit):
                    for x in item.items:
                        self.const(x, scope, "set element")
                    widths.add(len(item.items))
                else:
                    widths.add(self.const(item, scope, "set element").width)
            if len(widths) > 1:
                self.err("set literal mixes elements of different widths", s)
            return widths.pop() if widths else None
        if isinstance(s, A.SetRange):
            for x in (s.lo, s.hi):
                if self.const(x, scope, "range bound").width != 1:
                    self.err("range bounds must be numbers", x)
            return 1
        if isinstance(s, A.SetDiff):
            lw = self.set_width(s.left, scope)
            rw = self.set_width(s.right, scope)
            if lw is not None and rw is not None and lw != rw:
                self.err(f"set difference of {lw}-tuples and {rw}-tuples", s)
            return lw if lw is not None else rw
        self.err("expected a set", s)
        return None

    # -- expressions -------------------------------------------------------

    def const(self, e, scope, what):
        t = self.expr(e, scope)
        if t.kind != CONST:
            self.err(f"{what} must not depend on decision variables", e)
        return t

    def expr(self, e, scope) -> _Ty:
        if isinstance(e, A.Num):
            return _Ty(CONST)
        if isinstance(e, A.Ref):
            return self.ref(e, scope)
        if isinstance(e, A.Neg):
            t = self.expr(e.operand, scope)
            self.scalar(t, e)
            return _Ty(t.kind)
        if isinstance(e, A.BinOp):
            lt, rt = self.expr(e.left, scope), self.expr(e.right, scope)
            self.scalar(lt, e.left)
            self.scalar(rt, e.right)
            if e.op in "+-":
                return _Ty(LIN if LIN in (lt.kind, rt.kind) else CONST)
            if e.op == "*":
                if lt.kind == LIN and rt.kind == LIN:
                    self.err("nonlinear term: product of two expressions with decision variables", e)
                return _Ty(LIN if LIN in (lt.kind, rt.kind) else CONST)
            if rt.kind == LIN:
                self.err("non-constant divisor: division by an expression with decision variables", e)
            return _Ty(lt.kind)
        if isinstance(e, A.Agg):
            inner = self.bind(e.binders, scope, e)
            if e.cond is not None:
                self.cond(e.cond, inner)
            if e.op == "count":
                if e.body is not None:
                    self.cond(e.body, inner)
                return _Ty(CONST)
            bt = self.expr(e.body, inner)
            self.scalar(bt, e.body)
            if e.op == "sum":
                return _Ty(bt.kind)
            if bt.kind != CONST:
                self.err(f"non-constant coefficient: {e.op}(...) body must not contain decision variables", e.body)
            if e.op == "mincover":
                tt = self.expr(e.target, scope)
                self.scalar(tt, e.target)
                if tt.kind != CONST:
                    self.err("non-constant coefficient: mincover target must not contain decision variables",
                             e.target)
            return _Ty(CONST)
        if isinstance(e, A.ListAgg):
            for a in e.args:
                t = self.expr(a, scope)
                self.scalar(t, a)
                if t.kind != CONST:
                    self.err(f"non-constant coefficient: {e.op}(...) arguments must not contain decision variables", a)
            return _Ty(CONST)
        if isinstance(e, A.Card):
            self.set_width(e.set, scope)
            return _Ty(CONST)
        if isinstance(e, A.TupleLit):
            self.err("tuples are only allowed inside set literals", e)
            return _Ty(CONST, len(e.items))
        self.err(f"unexpected {type(e).__name__} in an expression", e)
        return _Ty(CONST)

    def scalar(self, t: _Ty, node):
        if t.width != 1:
            self.err(f"a {t.width}-tuple cannot be used as a number", node)

    def ref(self, e: A.Ref, scope) -> _Ty:
        if e.name in scope:
            if e.indices is not None:
                self.err(f"binder {e.name!r} cannot be indexed", e)
            return _Ty(CONST, scope[e.name])
        if e.name in self.aux:
            arity = self.aux[e.name]
            self.indices(e, scope, arity, "auxiliary variable")
            return _Ty(LIN)
        sym = self.st.get(e.name)
        if sym is None:
            self.err(f"unknown symbol {e.name!r}", e)
            return _Ty(CONST)
        if sym.kind == PARAM:
            self.indices(e, scope, sym.arity, "parameter")
            return _Ty(CONST)
        if sym.kind == VAR:
            self.indices(e, scope, sym.arity, "variable")
            return _Ty(LIN)
        self.err(f"{e.name!r} is a {'set' if sym.kind == SET else 'set function'}; use it after 'in' "
                 f"or inside card(...)", e)
        return _Ty(CONST)

    def indices(self, e, scope, arity, what):
        got = 0
        for ix in e.indices or ():
            got += self.const(ix, scope, "index").width
        if got != arity:
            self.err(f"arity mismatch: {what} {e.name!r} takes {arity} index(es), got {got}", e)

    # -- conditions --------------------------------------------------------

    def cond(self, c, scope):
        if isinstance(c, (A.And, A.Or)):
            self.cond(c.left, scope)
            self.cond(c.right, scope)
        elif isinstance(c, A.Not):
            self.cond(c.operand, scope)
        elif isinstance(c, A.Cmp):
            lt = self.const(c.left, scope, "condition")
            rt = self.const(c.right, scope, "condition")
            if lt.width != rt.width:
                self.err("comparison between values of different widths", c)
            elif lt.width != 1 and c.op not in ("==", "!="):
                self.err("tuples can only be compared with == or !=", c)
        elif isinstance(c, A.In):
            it = self.const(c.item, scope, "condition")
            sw = self.set_width(c.set, scope)
            if sw is not None and sw != it.width:
                self.err(f"membership test of a {it.width}-wide value in a set of {sw}-tuples", c)
        elif isinstance(c, A.Truth):
            t = self.const(c.expr, scope, "condition")
            self.scalar(t, c.expr)
        else:
            self.err("expected a condition", c)

    # -- file --------------------------------------------------------------

    def run(self, cf: A.CutFile):
        for d in cf.aux:
            if self.st.get(d.name) is not None:
                self.err(f"auxiliary variable {d.name!r} collides with a model symbol", d)
            elif d.name in self.aux:
                self.err(f"auxiliary variable {d.name!r} declared twice", d)
            scope = self.bind(d.binders, {}, d)
            if d.cond is not None:
                self.cond(d.cond, scope)
            for bound in (d.domain.lo, d.domain.hi):
                if bound is not None:
                    self.scalar(self.const(bound, {}, "domain bound"), bound)
            self.aux[d.name] = sum(scope.values())
        for c in cf.constraints:
            scope = self.bind(c.binders, {}, c)
            if c.cond is not None:
                self.cond(c.cond, scope)
            for side in (c.lhs, c.rhs):
                self.scalar(self.expr(side, scope), side)


@dataclass(frozen=True)
class CheckedCut:
    """A cut family that passed static checking against a problem's symbol signature."""

    family: object  # CutFamily
    signature: SymbolTable
    kind: str | None = None

    @property
    def family_id(self):
        return self.family.family_id


def diagnose(cutfile: A.CutFile, st: SymbolTable) -> list:
    ch = _Checker(st)
    ch.run(cutfile)
    return ch.errors


def check(family, st: SymbolTable, kind: str | None = None) -> CheckedCut:
    """Return a :class:`CheckedCut` or raise :class:`CheckFailed` with every error found."""
    sig = st.signature()
    errors = diagnose(family.ast, sig)
    if errors:
        raise CheckFailed(errors)
    return CheckedCut(family, sig, kind)


# ---------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------

def snap(v: float) -> float:
    r = round(v)
    return float(r) if abs(v - r) <= SNAP_TOL else float(v)


class _Lin:
    __slots__ = ("const", "coefs")

    def __init__(self, const=0.0, coefs=None):
        self.const = const
        self.coefs = coefs or {}

    def add(self, other, sign=1.0):
        out = dict(self.coefs)
        for k, c in other.coefs.items():
            out[k] = out.get(k, 0.0) + sign * c
        return _Lin(self.const + sign * other.const, out)

    def scale(self, f):
        return _Lin(self.const * f, {k: c * f for k, c in self.coefs.items()})

    @property
    def is_const(self):
        return not any(self.coefs.values())


class _Evaluator:
    def __init__(self, st: SymbolTable, var_index: dict, aux_index: dict):
        self.st = st
        self.var_index = var_index  # name -> set of index tuples
        self.aux_index = aux_index

    # -- values ------------------------------------------------------------

    def num(self, e, env) -> float:
        v = self.val(e, env)
        if isinstance(v, tuple):
            raise EvalError("a tuple cannot be used as a number", e.span)
        return v

    def val(self, e, env):
        if isinstance(e, A.Num):
            return e.value
        if isinstance(e, A.Ref):
            if e.name in env:
                return env[e.name]
            sym = self.st.get(e.name)
            if sym is None or sym.kind != PARAM:
                raise EvalError(f"{e.name!r} is not a constant here", e.span)
            return self.param(sym, e, env)
        if isinstance(e, A.Neg):
            return -self.num(e.operand, env)
        if isinstance(e, A.BinOp):
            a, b = self.num(e.left, env), self.num(e.right, env)
            if e.op == "+":
                return a + b
            if e.op == "-":
                return a - b
            if e.op == "*":
                return a * b
            if b == 0:
                raise EvalError("division by zero", e.span)
            return a / b
        if isinstance(e, A.Agg):
            return self.agg(e, env)
        if isinstance(e, A.ListAgg):
            vals = [self.num(a, env) for a in e.args]
            return min(vals) if e.op == "min" else max(vals)
        if isinstance(e, A.Card):
            return float(len(self.set(e.set, env)))
        raise EvalError(f"cannot evaluate {type(e).__name__}", getattr(e, "span", None))

    def param(self, sym, e, env):
        if sym.arity == 0:
            return float(sym.value)
        idx = self.index(e, env)
        key = idx[0] if sym.arity == 1 else idx
        try:
            v = sym.value[key]
        except (KeyError, TypeError):
            raise EvalError(f"parameter {e.name} has no entry at [{', '.join(map(str, idx))}]", e.span) from None
        return v if isinstance(v, tuple) else float(v)

    def index(self, e, env) -> tuple:
        out = []
        for ix in e.indices or ():
            v = self.val(ix, env)
            for part in (v if isinstance(v, tuple) else (v,)):
                out.append(_as_key(part, ix))
        return tuple(out)

    def set(self, s, env) -> list:
        if isinstance(s, A.SetName):
            return list(self.st.get(s.name).value)
        if isinstance(s, A.SetCall):
            sym = self.st.get(s.name)
            args = []
            for a in s.args:
                v = self.val(a, env)
                for part in (v if isinstance(v, tuple) else (v,)):
                    args.append(_as_key(part, a))
            try:
                return list(sym.value[tuple(args)])
            except KeyError:
                raise EvalError(f"{s.name}({', '.join(map(str, args))}) is undefined", s.span) from None
        if isinstance(s, A.SetLit):
            out = []
            for item in s.items:
                if isinstance(item, A.TupleLit):
                    el = tuple(_as_key(self.num(x, env), x) for x in item.items)
                else:
                    el = _as_key(self.num(item, env), item)
                if el not in out:
                    out.append(el)
            return out
        if isinstance(s, A.SetRange):
            lo = _as_key(self.num(s.lo, env), s.lo)
            hi = _as_key(self.num(s.hi, env), s.hi)
            return list(range(lo, hi + 1))
        if isinstance(s, A.SetDiff):
            drop = set(self.set(s.right, env))
            return [x for x in self.set(s.left, env) if x not in drop]
        raise EvalError("expected a set", getattr(s, "span", None))

    def envs(self, binders, cond, env):
        """All binder environments in lexicographic iteration order."""
        out = [dict(env)]
        for b in binders:
            nxt = []
            for en in out:
                for el in self.set(b.set, en):
                    e2 = dict(en)
                    if b.pattern:
                        if not isinstance(el, tuple) or len(el) != len(b.names):
                            raise EvalError(f"element {el} does not match pattern ({', '.join(b.names)})", b.span)
                        e2.update(zip(b.names, el))
                    else:
                        e2[b.names[0]] = el
                    nxt.append(e2)
            out = nxt
        if cond is not None:
            out = [en for en in out if self.truth(cond, en)]
        return out

    def agg(self, e: A.Agg, env):
        envs = self.envs(e.binders, e.cond, env)
        if e.op == "count":
            return float(sum(1 for en in envs if e.body is None or self.truth(e.body, en)))
        if e.op == "sum":
            return float(sum(self.num(e.body, en) for en in envs))
        vals = [self.num(e.body, en) for en in envs]
        if e.op in ("min", "max"):
            if not vals:
                raise EvalError(f"{e.op} over an empty range", e.span)
            return min(vals) if e.op == "min" else max(vals)
        target = self.num(e.target, env)
        if target <= 0:
            return 0.0
        acc = 0.0
        for r, v in enumerate(sorted(vals, reverse=True), start=1):
            acc += v
            if acc >= target - SNAP_TOL:
                return float(r)
        raise EvalError(f"mincover unreachable: values sum to {acc} < target {target}", e.span)

    def truth(self, c, env) -> bool:
        if isinstance(c, A.And):
            return self.truth(c.left, env) and self.truth(c.right, env)
        if isinstance(c, A.Or):
            return self.truth(c.left, env) or self.truth(c.right, env)
        if isinstance(c, A.Not):
            return not self.truth(c.operand, env)
        if isinstance(c, A.Truth):
            return self.num(c.expr, env) != 0
        if isinstance(c, A.In):
            v = self.val(c.item, env)
            key = tuple(_as_key(p, c.item) for p in v) if isinstance(v, tuple) else _as_key(v, c.item, strict=False)
            found = key in set(self.set(c.set, env))
            return found != c.negated
        a, b = self.val(c.left, env), self.val(c.right, env)
        if isinstance(a, tuple) or isinstance(b, tuple):
            return (a == b) if c.op == "==" else (a != b)
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b, "==": a == b, "!=": a != b}[c.op]

    # -- linear expressions ------------------------------------------------

    def lin(self, e, env) -> _Lin:
        if isinstance(e, A.Ref) and e.name not in env:
            if e.name in self.aux_index:
                return self.var_ref(e, env, self.aux_index[e.name])
            sym = self.st.get(e.name)
            if sym is not None and sym.kind == VAR:
                return self.var_ref(e, env, self.var_index.get(e.name, set()))
        if isinstance(e, A.Neg):
            return self.lin(e.operand, env).scale(-1.0)
        if isinstance(e, A.BinOp):
            a = self.lin(e.left, env)
            if e.op in "+-":
                return a.add(self.lin(e.right, env), 1.0 if e.op == "+" else -1.0)
            b = self.lin(e.right, env)
            if e.op == "*":
                if a.is_const:
                    return b.scale(a.const)
                if b.is_const:
                    return a.scale(b.const)
                raise EvalError("nonlinear term", e.span)
            if not b.is_const:
                raise EvalError("non-constant divisor", e.span)
            if b.const == 0:
                raise EvalError("division by zero", e.span)
            return a.scale(1.0 / b.const)
        if isinstance(e, A.Agg) and e.op == "sum":
            acc = _Lin()
            for en in self.envs(e.binders, e.cond, env):
                acc = acc.add(self.lin(e.body, en))
            return acc
        return _Lin(self.num(e, env))

    def var_ref(self, e, env, valid) -> _Lin:
        idx = self.index(e, env)
        if idx not in valid:
            raise EvalError(f"{e.name}[{', '.join(map(str, idx))}] is not a variable of this model", e.span)
        return _Lin(0.0, {(e.name, idx): 1.0})


def _as_key(v, node=None, strict=True):
    if isinstance(v, tuple):
        raise EvalError("nested tuple", getattr(node, "span", None))
    if isinstance(v, float):
        r = round(v)
        if abs(v - r) <= SNAP_TOL:
            return int(r)
        if strict:
            raise EvalError(f"non-integral index {v}", getattr(node, "span", None))
        return v
    return v


def instantiate_with(checked: CheckedCut, st: SymbolTable, model: milp.MilpModel):
    """Expand ``checked`` against a symbol table holding instance data.

    Returns ``(rows, aux_vardefs)``; rows are sorted by
    :func:`accelcut.milp.row_sort_key`.
    """
    cf = checked.family.ast
    ch = _Checker(st.signature())
    ch.run(cf)
    if ch.errors:
        raise CheckFailed(ch.errors)
    var_index = {v.name: set(v.indices) for v in model.vars}
    aux_defs = []
    aux_index = {}
    ev = _Evaluator(st, var_index, aux_index)
    for d in cf.aux:
        envs = ev.envs(d.binders, d.cond, {})
        idxs = []
        for en in envs:
            key = []
            for b in d.binders:
                for name in b.names:
                    v = en[name]
                    key.extend(v if isinstance(v, tuple) else (v,))
            idxs.append(tuple(key))
        if d.domain.kind == "binary":
            dom = milp.Domain(milp.BINARY)
        else:
            lo = ev.num(d.domain.lo, {}) if d.domain.lo is not None else 0.0
            hi = ev.num(d.domain.hi, {}) if d.domain.hi is not None else math.inf
            if not lo <= hi:
                raise EvalError(f"empty domain [{lo}, {hi}] for {d.name}", d.domain.span)
            if lo == 0.0 and hi == math.inf:
                dom = milp.Domain(milp.CONTINUOUS_NONNEG)
            else:
                dom = milp.Domain(milp.CONTINUOUS_BOUNDED, lo, hi)
        arity = ch.aux[d.name]
        uniq = tuple(dict.fromkeys(idxs))
        aux_defs.append(milp.VarDef(d.name, arity, dom, uniq))
        aux_index[d.name] = set(uniq)
    rows = []
    for c in cf.constraints:
        for en in ev.envs(c.binders, c.cond, {}):
            diff = ev.lin(c.lhs, en).add(ev.lin(c.rhs, en), -1.0)
            coefs = {k: snap(v) for k, v in diff.coefs.items()}
            coefs = {k: v for k, v in coefs.items() if v != 0.0}
            rhs = snap(-diff.const)
            if not all(math.isfinite(v) for v in coefs.values()) or not math.isfinite(rhs):
                raise EvalError("non-finite coefficient", c.span)
            rows.append(milp.LinConstraint.build(coefs, c.rel, rhs))
    rows.sort(key=milp.row_sort_key)
    return rows, aux_defs
