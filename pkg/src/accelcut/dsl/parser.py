"""Lexer and recursive-descent parser for ``.cut`` files.

Grammar (``[..]`` optional, ``{..}`` repetition)::

    cutfile    := {auxdecl} constraint {constraint}
    auxdecl    := "aux" IDENT ["[" binders ["if" cond] "]"] ":" domain [";"]
    domain     := "binary" | "continuous" ["[" expr "," expr "]"]
    constraint := ["forall" binders ["if" cond] ":"] expr REL expr [";"]
    binders    := binder {"," binder}
    binder     := (IDENT | "(" IDENT {"," IDENT} ")") "in" setexpr
    setexpr    := setatom {"\\" setatom}
    setatom    := IDENT | IDENT "(" expr {"," expr} ")"
                | "{" [elem {"," elem}] "}" | "{" expr ".." expr "}"
    elem       := expr | "(" expr "," expr {"," expr} ")"
    expr       := term {("+" | "-") term}
    term       := unary {("*" | "/") unary}
    unary      := "-" unary | atom
    atom       := NUMBER | IDENT ["[" expr {"," expr} "]"] | "(" expr ")"
                | ("sum" | "min" | "max") "(" binders ["if" cond] ":" expr ")"
                | ("min" | "max") "(" expr "," expr {"," expr} ")"
                | "count" "(" binders ["if" cond] [":" cond] ")"
                | "card" "(" setexpr ")"
                | "mincover" "(" binders ["if" cond] ":" expr "," expr ")"
    cond       := conj {"or" conj}
    conj       := neg {"and" neg}
    neg        := "not" neg | "(" cond ")" | expr [CMP expr | ["not"] "in" setexpr]
    REL        := "<=" | ">=" | "=="
    CMP        := "<" | "<=" | ">" | ">=" | "==" | "!="

``//`` starts a comment running to the end of the line.  A leading comment
line ``// idea: ...`` (and the comment lines directly after it) carries the
human-readable idea of the cut.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import ast as A

KEYWORDS = {"forall", "in", "if", "and", "or", "not", "aux", "sum", "min", "max", "count",
            "card", "mincover", "binary", "continuous"}
RELS = ("<=", ">=", "==")
CMPS = ("<", "<=", ">", ">=", "==", "!=")

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<number>(?:\d+\.(?!\.)\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\.\.|<=|>=|==|!=|[<>+\-*/()\[\]{},:;\\])
""", re.VERBOSE)


class ParseError(Exception):
    """Syntax error with a 1-based position and the set of tokens that would have been accepted."""

    def __init__(self, message, line, col, expected=(), found=None):
        self.message = message
        self.line = line
        self.col = col
        self.expected = tuple(sorted(set(expected)))
        self.found = found
        super().__init__(self.render())

    def render(self) -> str:
        text = f"line {self.line}, column {self.col}: {self.message}"
        if self.expected:
            text += "; expected one of: " + ", ".join(self.expected)
        if self.found is not None:
            text += f"; found {self.found}"
        return text


@dataclass(frozen=True)
class Token:
    kind: str  # number | ident | kw | op | eof
    text: str
    line: int
    col: int

    def describe(self):
        return "end of input" if self.kind == "eof" else repr(self.text)


def tokenize(src: str):
    toks = []
    pos, line, col = 0, 1, 1
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind == "ident" and text in KEYWORDS:
                toks.append(Token("kw", text, line, col))
            elif kind in ("number", "ident", "op"):
                toks.append(Token(kind, text, line, col))
            col += len(text)
        pos = m.end()
    toks.append(Token("eof", "", line, col))
    return toks


def extract_idea(src: str) -> str:
    """Idea text from the leading ``// idea:`` comment block ("" when absent)."""
    lines = src.splitlines()
    idea = []
    in_idea = False
    for raw in lines:
        s = raw.strip()
        if not s:
            if in_idea:
                break
            continue
        if not s.startswith("//"):
            break
        body = s[2:].strip()
        if not in_idea and body.lower().startswith("idea:"):
            in_idea = True
            body = body[5:].strip()
            if body:
                idea.append(body)
        elif in_idea:
            idea.append(body)
    return " ".join(idea).strip()


class Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0

    # -- token helpers ---------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text in texts

    def accept(self, text):
        if self.at(text):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text, what=None):
        t = self.accept(text)
        if t is None:
            self.fail(what or f"expected {text!r}", [repr(text)])
        return t

    def fail(self, message, expected=()):
        t = self.tok
        raise ParseError(message, t.line, t.col, expected, t.describe())

    def span_from(self, start: Token) -> A.Span:
        last = self.toks[max(self.i - 1, 0)]
        return A.Span(start.line, start.col, last.line, last.col + len(last.text))

    def ident(self, what="identifier"):
        t = self.tok
        if t.kind != "ident":
            if t.kind == "kw":
                self.fail(f"{t.text!r} is a reserved word, expected {what}", ["identifier"])
            self.fail(f"expected {what}", ["identifier"])
        self.i += 1
        return t

    # -- file ------------------------------------------------------------

    def parse_file(self) -> A.CutFile:
        start = self.tok
        aux = []
        while self.at("aux"):
            aux.append(self.parse_aux())
        cons = []
        while self.tok.kind != "eof":
            if self.at("aux"):
                self.fail("auxiliary declarations must precede all constraints")
            cons.append(self.parse_constraint())
        if not cons:
            self.fail("a cut file needs at least one constraint", ["'forall'", "expression"])
        return A.CutFile(tuple(aux), tuple(cons), self.span_from(start))

    def parse_aux(self) -> A.AuxDecl:
        start = self.expect("aux")
        name = self.ident("auxiliary variable name").text
        binders, cond = (), None
        if self.accept("["):
            binders = self.parse_binders()
            if self.accept("if"):
                cond = self.parse_cond()
            self.expect("]")
        self.expect(":")
        dstart = self.tok
        if self.accept("binary"):
            dom = A.Domain("binary", span=self.span_from(dstart))
        elif self.accept("continuous"):
            lo = hi = None
            if self.accept("["):
                lo = self.parse_expr()
                self.expect(",")
                hi = self.parse_expr()
                self.expect("]")
            dom = A.Domain("continuous", lo, hi, self.span_from(dstart))
        else:
            self.fail("expected a domain", ["'binary'", "'continuous'"])
        self.accept(";")
        return A.AuxDecl(name, tuple(binders), cond, dom, self.span_from(start))

    def parse_constraint(self) -> A.Constraint:
        start = self.tok
        binders, cond = (), None
        if self.accept("forall"):
            binders = self.parse_binders()
            if self.accept("if"):
                cond = self.parse_cond()
            self.expect(":")
        lhs = self.parse_expr()
        if not self.at(*RELS):
            exp = ["'<='", "'>='", "'=='", "'+'", "'-'", "'*'", "'/'"]
            if self.at("<", ">"):
                self.fail("strict inequalities are not allowed in constraints", exp[:3])
            self.fail("expected a relation", exp)
        rel = self.tok.text
        self.i += 1
        rhs = self.parse_expr()
        if self.at(*RELS):
            self.fail("chained relations are not allowed; write one relation per constraint")
        self.accept(";")
        return A.Constraint(tuple(binders), cond, lhs, rel, rhs, self.span_from(start))

    # -- binders and sets --------------------------------------------------

    def parse_binders(self):
        out = [self.parse_binder()]
        while self.at(",") and self._binder_ahead(1):
            self.i += 1
            out.append(self.parse_binder())
        return out

    def _binder_ahead(self, k=0) -> bool:
        t = self.peek(k)
        if t.kind == "ident":
            nxt = self.peek(k + 1)
            return nxt.kind == "kw" and nxt.text == "in"
        if t.kind == "op" and t.text == "(":
            j = k + 1
            while True:
                if self.peek(j).kind != "ident":
                    return False
                j += 1
                sep = self.peek(j)
                if sep.kind == "op" and sep.text == ",":
                    j += 1
                    continue
                if sep.kind == "op" and sep.text == ")":
                    after = self.peek(j + 1)
                    return after.kind == "kw" and after.text == "in"
                return False
        return False

    def parse_binder(self) -> A.Binder:
        start = self.tok
        if self.accept("("):
            names = [self.ident("binder name").text]
            while self.accept(","):
                names.append(self.ident("binder name").text)
            self.expect(")")
            pattern = True
        else:
            names = [self.ident("binder name").text]
            pattern = False
        self.expect("in", "expected 'in' after binder name")
        s = self.parse_setexpr()
        return A.Binder(tuple(names), pattern, s, self.span_from(start))

    def parse_setexpr(self):
        start = self.tok
        left = self.parse_setatom()
        while self.accept("\\"):
            right = self.parse_setatom()
            left = A.SetDiff(left, right, self.span_from(start))
        return left

    def parse_setatom(self):
        start = self.tok
        if self.tok.kind == "ident":
            name = self.tok.text
            self.i += 1
            if self.accept("("):
                args = [self.parse_expr()]
                while self.accept(","):
                    args.append(self.parse_expr())
                self.expect(")")
                return A.SetCall(name, tuple(args), self.span_from(start))
            return A.SetName(name, self.span_from(start))
        if self.accept("{"):
            if self.accept("}"):
                return A.SetLit((), self.span_from(start))
            first = self.parse_elem()
            if self.accept(".."):
                hi = self.parse_expr()
                self.expect("}")
                return A.SetRange(first, hi, self.span_from(start))
            items = [first]
            while self.accept(","):
                items.append(self.parse_elem())
            self.expect("}", "expected '}' to close the set")
            return A.SetLit(tuple(items), self.span_from(start))
        self.fail("expected a set", ["set name", "'{'"])

    def parse_elem(self):
        if self.at("("):
            save = self.i
            start = self.tok
            self.i += 1
            first = self.parse_expr()
            if self.accept(","):
                items = [first, self.parse_expr()]
                while self.accept(","):
                    items.append(self.parse_expr())
                self.expect(")")
                return A.TupleLit(tuple(items), self.span_from(start))
            self.i = save
        return self.parse_expr()

    # -- expressions -----------------------------------------------------

    def parse_expr(self):
        start = self.tok
        left = self.parse_term()
        while self.at("+", "-"):
            op = self.tok.text
            self.i += 1
            right = self.parse_term()
            left = A.BinOp(op, left, right, self.span_from(start))
        return left

    def parse_term(self):
        start = self.tok
        left = self.parse_unary()
        while self.at("*", "/"):
            op = self.tok.text
            self.i += 1
            right = self.parse_unary()
            left = A.BinOp(op, left, right, self.span_from(start))
        return left

    def parse_unary(self):
        start = self.tok
        if self.accept("-"):
            return A.Neg(self.parse_unary(), self.span_from(start))
        return self.parse_atom()

    def parse_atom(self):
        t = self.tok
        if t.kind == "number":
            self.i += 1
            return A.Num(float(t.text), self.span_from(t))
        if t.kind == "ident":
            self.i += 1
            idx = None
            if self.accept("["):
                items = [self.parse_expr()]
                while self.accept(","):
                    items.append(self.parse_expr())
                self.expect("]", "expected ']' to close the index list")
                idx = tuple(items)
            return A.Ref(t.text, idx, self.span_from(t))
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.kind == "kw" and t.text in ("sum", "min", "max", "count", "mincover", "card"):
            self.i += 1
            return self.parse_aggregate(t)
        self.fail("expected an expression",
                  ["number", "identifier", "'('", "'-'", "'sum'", "'min'", "'max'", "'count'",
                   "'card'", "'mincover'"])

    def parse_aggregate(self, t: Token):
        op = t.text
        self.expect("(", f"expected '(' after {op!r}")
        if op == "card":
            s = self.parse_setexpr()
            self.expect(")")
            return A.Card(s, self.span_from(t))
        if op in ("min", "max") and not self._binder_ahead():
            args = [self.parse_expr()]
            self.expect(",", f"expected ',' ({op} of a list needs at least two arguments)")
            args.append(self.parse_expr())
            while self.accept(","):
                args.append(self.parse_expr())
            self.expect(")")
            return A.ListAgg(op, tuple(args), self.span_from(t))
        if not self._binder_ahead():
            self.fail(f"expected a binder ('name in set') in {op}(...)", ["binder"])
        binders = self.parse_binders()
        cond = None
        if self.accept("if"):
            cond = self.parse_cond()
        if op == "count":
            body = None
            if self.accept(":"):
                body = self.parse_cond()
            self.expect(")")
            return A.Agg(op, tuple(binders), cond, body, None, self.span_from(t))
        self.expect(":", f"expected ':' before the body of {op}(...)")
        body = self.parse_expr()
        target = None
        if op == "mincover":
            self.expect(",", "mincover needs a target: mincover(b in S: value, target)")
            target = self.parse_expr()
        self.expect(")")
        return A.Agg(op, tuple(binders), cond, body, target, self.span_from(t))

    # -- conditions ------------------------------------------------------

    def parse_cond(self):
        start = self.tok
        left = self.parse_conj()
        while self.accept("or"):
            left = A.Or(left, self.parse_conj(), self.span_from(start))
        return left

    def parse_conj(self):
        start = self.tok
        left = self.parse_neg()
        while self.accept("and"):
            left = A.And(left, self.parse_neg(), self.span_from(start))
        return left

    def parse_neg(self):
        start = self.tok
        if self.accept("not"):
            return A.Not(self.parse_neg(), self.span_from(start))
        if self.at("("):
            save = self.i
            self.i += 1
            try:
                inner = self.parse_cond()
                self.expect(")")
            except ParseError:
                inner = None
            if inner is not None and not self.at(*CMPS, "+", "-", "*", "/", "in", "not") \
                    and not isinstance(inner, A.Truth):
                return inner
            self.i = save
        left = self.parse_expr()
        if self.at(*CMPS):
            op = self.tok.text
            self.i += 1
            right = self.parse_expr()
            return A.Cmp(op, left, right, self.span_from(start))
        if self.at("not") and self.peek().kind == "kw" and self.peek().text == "in":
            self.i += 2
            return A.In(left, self.parse_setexpr(), True, self.span_from(start))
        if self.accept("in"):
            return A.In(left, self.parse_setexpr(), False, self.span_from(start))
        return A.Truth(left, self.span_from(start))


def parse_ast(src: str) -> A.CutFile:
    p = Parser(src)
    try:
        return p.parse_file()
    except ParseError as err:
        if err.found == "end of input":
            opener = _unclosed(p.toks)
            if opener is not None:
                raise ParseError(f"unclosed {opener.text!r} ({err.message})", opener.line, opener.col,
                                 err.expected, err.found) from None
        raise


_PAIRS = {")": "(", "]": "[", "}": "{"}


def _unclosed(toks):
    stack = []
    for t in toks:
        if t.kind != "op":
            continue
        if t.text in "([{":
            stack.append(t)
        elif t.text in _PAIRS and stack and stack[-1].text == _PAIRS[t.text]:
            stack.pop()
    return stack[-1] if stack else None
