"""Source rendering of cut-language trees.

:func:`to_source` emits text that parses back to an equal tree.
:func:`canonical_form` renders a normalised form (binders alpha-renamed,
``+`` and ``*`` chains sorted) used for structural hashing.
"""

from __future__ import annotations

from . import ast as A

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def expr_src(e, names=None) -> str:
    return _Printer(names or {}).expr(e)


def to_source(cf: A.CutFile, idea: str | None = None) -> str:
    p = _Printer({})
    out = []
    if idea:
        out.append(f"// idea: {idea}")
    out.extend(p.aux(d) for d in cf.aux)
    out.extend(p.constraint(c) for c in cf.constraints)
    return "\n".join(out) + "\n"


class _Printer:
    def __init__(self, names):
        # binder renaming map (identity unless canonicalising)
        self.names = names

    def n(self, name):
        return self.names.get(name, name)

    def aux(self, d: A.AuxDecl) -> str:
        head = f"aux {self.n(d.name)}"
        if d.binders:
            inner = self.binders(d.binders)
            if d.cond is not None:
                inner += f" if {self.cond(d.cond)}"
            head += f"[{inner}]"
        dom = d.domain.kind
        if d.domain.lo is not None:
            dom += f"[{self.expr(d.domain.lo)}, {self.expr(d.domain.hi)}]"
        return f"{head}: {dom};"

    def constraint(self, c: A.Constraint) -> str:
        body = f"{self.expr(c.lhs)} {c.rel} {self.expr(c.rhs)};"
        if not c.binders:
            return body
        head = f"forall {self.binders(c.binders)}"
        if c.cond is not None:
            head += f" if {self.cond(c.cond)}"
        return f"{head}: {body}"

    def binders(self, bs) -> str:
        return ", ".join(self.binder(b) for b in bs)

    def binder(self, b: A.Binder) -> str:
        pat = f"({', '.join(self.n(x) for x in b.names)})" if b.pattern else self.n(b.names[0])
        return f"{pat} in {self.set(b.set)}"

    def set(self, s) -> str:
        if isinstance(s, A.SetName):
            return s.name
        if isinstance(s, A.SetCall):
            return f"{s.name}({', '.join(self.expr(a) for a in s.args)})"
        if isinstance(s, A.SetLit):
            return "{" + ", ".join(self.elem(x) for x in s.items) + "}"
        if isinstance(s, A.SetRange):
            return "{" + f"{self.expr(s.lo)}..{self.expr(s.hi)}" + "}"
        if isinstance(s, A.SetDiff):
            return f"{self.set(s.left)} \\ {self.set(s.right)}"
        raise TypeError(type(s).__name__)

    def elem(self, x) -> str:
        if isinstance(x, A.TupleLit):
            return f"({', '.join(self.expr(i) for i in x.items)})"
        return self.expr(x)

    def expr(self, e, parent_prec=0, right=False) -> str:
        if isinstance(e, A.Num):
            return fmt_num(e.value)
        if isinstance(e, A.Ref):
            if e.indices is None:
                return self.n(e.name)
            return f"{self.n(e.name)}[{', '.join(self.expr(i) for i in e.indices)}]"
        if isinstance(e, A.Neg):
            inner = self.expr(e.operand, 3)
            return f"-{inner}"
        if isinstance(e, A.BinOp):
            prec = _PREC[e.op]
            text = f"{self.expr(e.left, prec)} {e.op} {self.expr(e.right, prec, True)}"
            if prec < parent_prec or (right and prec == parent_prec):
                return f"({text})"
            return text
        if isinstance(e, A.Agg):
            inner = self.binders(e.binders)
            if e.cond is not None:
                inner += f" if {self.cond(e.cond)}"
            if e.op == "count":
                if e.body is not None:
                    inner += f": {self.cond(e.body)}"
                return f"count({inner})"
            inner += f": {self.expr(e.body)}"
            if e.op == "mincover":
                inner += f", {self.expr(e.target)}"
            return f"{e.op}({inner})"
        if isinstance(e, A.ListAgg):
            return f"{e.op}({', '.join(self.expr(a) for a in e.args)})"
        if isinstance(e, A.Card):
            return f"card({self.set(e.set)})"
        if isinstance(e, A.TupleLit):
            return f"({', '.join(self.expr(i) for i in e.items)})"
        raise TypeError(type(e).__name__)

    def cond(self, c, parent=0) -> str:
        # precedence: or 1, and 2, not 3
        if isinstance(c, A.Or):
            text = f"{self.cond(c.left, 1)} or {self.cond(c.right, 1)}"
            return f"({text})" if parent > 1 else text
        if isinstance(c, A.And):
            text = f"{self.cond(c.left, 2)} and {self.cond(c.right, 2)}"
            return f"({text})" if parent > 2 else text
        if isinstance(c, A.Not):
            return f"not {self.cond(c.operand, 3)}"
        if isinstance(c, A.Cmp):
            return f"{self.expr(c.left)} {c.op} {self.expr(c.right)}"
        if isinstance(c, A.In):
            kw = "not in" if c.negated else "in"
            return f"{self.expr(c.item)} {kw} {self.set(c.set)}"
        if isinstance(c, A.Truth):
            return self.expr(c.expr)
        raise TypeError(type(c).__name__)


# ---------------------------------------------------------------------
# canonical form
# ---------------------------------------------------------------------

class _Canon:
    """Renders a scope-aware normal form with binders renamed in binding order."""

    def __init__(self):
        self.counter = 0

    def fresh(self, env, names):
        env = dict(env)
        for x in names:
            env[x] = f"_b{self.counter}"
            self.counter += 1
        return env

    def binders(self, bs, env):
        parts = []
        for b in bs:
            s = self.set(b.set, env)
            env = self.fresh(env, b.names)
            pat = ",".join(env[x] for x in b.names)
            parts.append(f"({pat}{'' if not b.pattern else ';T'})in{s}")
        return parts, env

    def set(self, s, env):
        if isinstance(s, A.SetName):
            return s.name
        if isinstance(s, A.SetCall):
            return f"{s.name}({','.join(self.expr(a, env) for a in s.args)})"
        if isinstance(s, A.SetLit):
            items = sorted(set(self.elem(x, env) for x in s.items))
            return "{" + ",".join(items) + "}"
        if isinstance(s, A.SetRange):
            return "{" + f"{self.expr(s.lo, env)}..{self.expr(s.hi, env)}" + "}"
        if isinstance(s, A.SetDiff):
            return f"({self.set(s.left, env)}\\{self.set(s.right, env)})"
        raise TypeError(type(s).__name__)

    def elem(self, x, env):
        if isinstance(x, A.TupleLit):
            return "(" + ",".join(self.expr(i, env) for i in x.items) + ")"
        return self.expr(x, env)

    def terms(self, e, env, sign, out):
        if isinstance(e, A.BinOp) and e.op in "+-":
            self.terms(e.left, env, sign, out)
            self.terms(e.right, env, sign if e.op == "+" else -sign, out)
        elif isinstance(e, A.Neg):
            self.terms(e.operand, env, -sign, out)
        else:
            out.append(("+" if sign > 0 else "-") + self.expr(e, env))

    def factors(self, e, env, out):
        if isinstance(e, A.BinOp) and e.op == "*":
            self.factors(e.left, env, out)
            self.factors(e.right, env, out)
        else:
            out.append(self.expr(e, env))

    def expr(self, e, env):
        if isinstance(e, A.Num):
            return fmt_num(e.value)
        if isinstance(e, A.Ref):
            name = env.get(e.name, e.name)
            if e.indices is None:
                return name
            return f"{name}[{','.join(self.expr(i, env) for i in e.indices)}]"
        if isinstance(e, (A.BinOp, A.Neg)) and (isinstance(e, A.Neg) or e.op in "+-"):
            out = []
            self.terms(e, env, 1, out)
            return "(" + "".join(sorted(out)) + ")"
        if isinstance(e, A.BinOp) and e.op == "*":
            out = []
            self.factors(e, env, out)
            return "(" + "*".join(sorted(out)) + ")"
        if isinstance(e, A.BinOp):
            return f"({self.expr(e.left, env)}/{self.expr(e.right, env)})"
        if isinstance(e, A.Agg):
            parts, inner = self.binders(e.binders, env)
            head = ",".join(parts)
            if e.cond is not None:
                head += "|" + self.cond(e.cond, inner)
            if e.op == "count":
                body = self.cond(e.body, inner) if e.body is not None else ""
                return f"count[{head}:{body}]"
            body = self.expr(e.body, inner)
            if e.op == "mincover":
                body += "," + self.expr(e.target, env)
            return f"{e.op}[{head}:{body}]"
        if isinstance(e, A.ListAgg):
            return f"{e.op}<" + ",".join(sorted(self.expr(a, env) for a in e.args)) + ">"
        if isinstance(e, A.Card):
            return f"card({self.set(e.set, env)})"
        if isinstance(e, A.TupleLit):
            return "(" + ",".join(self.expr(i, env) for i in e.items) + ")"
        raise TypeError(type(e).__name__)

    def cond(self, c, env):
        if isinstance(c, (A.And, A.Or)):
            op = "and" if isinstance(c, A.And) else "or"
            flat = []
            stack = [c]
            while stack:
                node = stack.pop()
                if type(node) is type(c):
                    stack.extend([node.left, node.right])
                else:
                    flat.append(self.cond(node, env))
            return "(" + f" {op} ".join(sorted(flat)) + ")"
        if isinstance(c, A.Not):
            return f"not({self.cond(c.operand, env)})"
        if isinstance(c, A.Cmp):
            l, r = self.expr(c.left, env), self.expr(c.right, env)
            op = c.op
            if op in (">", ">="):
                l, r, op = r, l, {">": "<", ">=": "<="}[op]
            if op in ("==", "!=") and r < l:
                l, r = r, l
            return f"{l}{op}{r}"
        if isinstance(c, A.In):
            return f"{self.expr(c.item, env)}{' notin ' if c.negated else ' in '}{self.set(c.set, env)}"
        if isinstance(c, A.Truth):
            return f"truth({self.expr(c.expr, env)})"
        raise TypeError(type(c).__name__)

    def constraint(self, c: A.Constraint, env):
        self.counter = 0
        parts, inner = self.binders(c.binders, env)
        head = ",".join(parts)
        if c.cond is not None:
            head += "|" + self.cond(c.cond, inner)
        l, r = self.expr(c.lhs, inner), self.expr(c.rhs, inner)
        rel = c.rel
        if rel == ">=":
            l, r, rel = r, l, "<="
        elif rel == "==" and r < l:
            l, r = r, l
        return f"forall[{head}]:{l}{rel}{r}"

    def aux(self, d: A.AuxDecl, env):
        self.counter = 0
        parts, inner = self.binders(d.binders, {})
        head = ",".join(parts)
        if d.cond is not None:
            head += "|" + self.cond(d.cond, inner)
        dom = d.domain.kind
        if d.domain.lo is not None:
            dom += f"[{self.expr(d.domain.lo, {})},{self.expr(d.domain.hi, {})}]"
        return f"aux {env[d.name]}[{head}]:{dom}"


def canonical_form(cf: A.CutFile) -> str:
    c = _Canon()
    env = {d.name: f"_z{k}" for k, d in enumerate(cf.aux)}
    aux = [c.aux(d, env) for d in cf.aux]
    cons = sorted(set(c.constraint(x, env) for x in cf.constraints))
    return "\n".join(aux + cons)
