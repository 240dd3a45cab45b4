"""Symbol tables exported by problem builders for cut-language binding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

SET, PARAM, SETFN, VAR = "set", "param", "setfn", "var"


@dataclass(frozen=True)
class Symbol:
    name: str
    kind: str
    arity: int = 0
    # element width for sets / set functions (1 = scalar elements)
    width: int = 1
    value: Any = None
    doc: str = ""


@dataclass
class SymbolTable:
    symbols: dict = field(default_factory=dict)

    def add_set(self, name, elements, doc=""):
        elements = tuple(elements)
        width = len(elements[0]) if elements and isinstance(elements[0], tuple) else 1
        self.symbols[name] = Symbol(name, SET, 0, width, elements, doc)

    def add_param(self, name, value, arity=0, doc=""):
        self.symbols[name] = Symbol(name, PARAM, arity, 1, value, doc)

    def add_setfn(self, name, mapping, arity=1, width=1, doc=""):
        self.symbols[name] = Symbol(name, SETFN, arity, width, mapping, doc)

    def add_var(self, name, arity, doc=""):
        self.symbols[name] = Symbol(name, VAR, arity, 1, None, doc)

    def get(self, name):
        return self.symbols.get(name)

    def names(self):
        return list(self.symbols)

    def signature(self) -> "SymbolTable":
        """Same entries without instance data (what the checker needs)."""
        return SymbolTable({n: Symbol(s.name, s.kind, s.arity, s.width, None, s.doc)
                            for n, s in self.symbols.items()})

    def listing(self) -> str:
        lines = []
        for s in self.symbols.values():
            if s.kind == SET:
                shape = f"set of {s.width}-tuples" if s.width > 1 else "set"
                lines.append(f"{s.name}: {shape}  {s.doc}".rstrip())
            elif s.kind == SETFN:
                lines.append(f"{s.name}({', '.join('_' * 1 for _ in range(s.arity))}): set-valued function  {s.doc}".rstrip())
            else:
                idx = f"[{','.join('.' for _ in range(s.arity))}]" if s.arity else ""
                lines.append(f"{s.name}{idx}: {s.kind}  {s.doc}".rstrip())
        return "\n".join(lines)
