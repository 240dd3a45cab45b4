"""Instance files: native JSON and a TSPLIB subset (EUC_2D, EXPLICIT FULL_MATRIX)."""

from __future__ import annotations

import json
import os
import tempfile

from .base import ProblemError, ProblemInstance

NATIVE = "native-json"
TSPLIB_EUC2D = "tsplib-euc2d"
TSPLIB_EXPLICIT = "tsplib-explicit"
FORMATS = (NATIVE, TSPLIB_EUC2D, TSPLIB_EXPLICIT)


class ParseError(ProblemError):
    def __init__(self, msg, line=None, col=None):
        loc = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(loc + msg)
        self.line, self.col = line, col


class UnsupportedFormat(ProblemError):
    pass


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_instance(inst: ProblemInstance) -> str:
    return json.dumps(inst.to_json(), sort_keys=True, indent=1) + "\n"


def instance_from_json(obj) -> ProblemInstance:
    from . import REGISTRY
    try:
        kind = obj["kind"]
        mod = REGISTRY[kind]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"not a native instance object: {exc}") from exc
    payload = mod.from_json_payload(obj["payload"])
    mod.validate(payload)
    return ProblemInstance(kind, payload, obj.get("seed"))


def write_instance(inst: ProblemInstance, path) -> None:
    atomic_write_text(path, dumps_instance(inst))


def read_instance(path, fmt: str = NATIVE) -> ProblemInstance:
    if fmt not in FORMATS:
        raise UnsupportedFormat(f"unknown format {fmt!r}; known: {', '.join(FORMATS)}")
    with open(path) as fh:
        text = fh.read()
    if fmt == NATIVE:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
        return instance_from_json(obj)
    return parse_tsplib(text, fmt)


def parse_tsplib(text: str, fmt: str | None = None) -> ProblemInstance:
    """Parse the supported TSPLIB subset into a TSP instance."""
    from . import tsp
    header = {}
    lines = text.splitlines()
    pos = 0
    section = None
    while pos < len(lines):
        raw = lines[pos]
        line = raw.strip()
        pos += 1
        if not line:
            continue
        if line in ("NODE_COORD_SECTION", "EDGE_WEIGHT_SECTION"):
            section = line
            break
        if line == "EOF":
            break
        if ":" not in line:
            raise ParseError(f"expected 'KEY : VALUE', got {line!r}", pos, 1)
        key, val = line.split(":", 1)
        header[key.strip().upper()] = val.strip()
    if header.get("TYPE", "TSP").split()[0] not in ("TSP",):
        raise UnsupportedFormat(f"TYPE {header.get('TYPE')!r} is not supported")
    try:
        n = int(header["DIMENSION"])
    except (KeyError, ValueError):
        raise ParseError("missing or non-integer DIMENSION", pos, 1) from None
    ewt = header.get("EDGE_WEIGHT_TYPE", "")
    if ewt == "EUC_2D":
        if fmt not in (None, TSPLIB_EUC2D):
            raise UnsupportedFormat("file is EUC_2D but explicit format was requested")
        if section != "NODE_COORD_SECTION":
            raise ParseError("missing NODE_COORD_SECTION", pos, 1)
        coords = []
        for _ in range(n):
            line_no, tok = _next_tokens(lines, pos)
            if tok is None:
                raise ParseError(f"expected {n} coordinate lines, found {len(coords)}", line_no, 1)
            pos = line_no
            if len(tok) < 3:
                raise ParseError("coordinate line needs 'id x y'", line_no, 1)
            try:
                coords.append((float(tok[1]), float(tok[2])))
            except ValueError:
                raise ParseError(f"bad coordinate {tok[1:3]}", line_no, len(tok[0]) + 2) from None
        pts = tuple(tuple(int(v) if float(v).is_integer() else v for v in p) for p in coords)
        inst = tsp.TspInstance(n, tsp.euclidean_costs(coords), pts)
    elif ewt == "EXPLICIT":
        if fmt not in (None, TSPLIB_EXPLICIT):
            raise UnsupportedFormat("file is EXPLICIT but EUC_2D format was requested")
        if header.get("EDGE_WEIGHT_FORMAT", "") != "FULL_MATRIX":
            raise UnsupportedFormat(f"EDGE_WEIGHT_FORMAT {header.get('EDGE_WEIGHT_FORMAT')!r} is not supported")
        if section != "EDGE_WEIGHT_SECTION":
            raise ParseError("missing EDGE_WEIGHT_SECTION", pos, 1)
        vals = []
        line_no = pos
        while len(vals) < n * n:
            line_no, tok = _next_tokens(lines, line_no)
            if tok is None:
                raise ParseError(f"expected {n * n} weights, found {len(vals)}", line_no, 1)
            for t in tok:
                try:
                    vals.append(float(t))
                except ValueError:
                    raise ParseError(f"bad weight {t!r}", line_no, 1) from None
        cost = tuple(tuple(int(v) if v.is_integer() else v for v in vals[r * n:(r + 1) * n]) for r in range(n))
        inst = tsp.TspInstance(n, cost)
    else:
        raise UnsupportedFormat(f"EDGE_WEIGHT_TYPE {ewt!r} is not supported")
    try:
        tsp.validate(inst)
    except ProblemError as exc:
        raise ParseError(str(exc)) from exc
    return ProblemInstance("tsp", inst, None)


def _next_tokens(lines, pos):
    """Tokens of the next nonblank line at or after 0-based ``pos``; returns (1-based line, tokens)."""
    while pos < len(lines):
        tok = lines[pos].split()
        pos += 1
        if tok and tok[0] != "EOF":
            return pos, tok
        if tok and tok[0] == "EOF":
            return pos, None
    return pos, None


def write_tsplib_euc2d(inst, name: str = "instance") -> str:
    """Render a coordinate TSP instance as a TSPLIB EUC_2D file."""
    tsp_inst = inst.payload if isinstance(inst, ProblemInstance) else inst
    if tsp_inst.coords is None:
        raise UnsupportedFormat("instance has no coordinates")
    out = [f"NAME : {name}", "TYPE : TSP", f"DIMENSION : {tsp_inst.n}", "EDGE_WEIGHT_TYPE : EUC_2D",
           "NODE_COORD_SECTION"]
    out += [f"{k} {x} {y}" for k, (x, y) in enumerate(tsp_inst.coords, start=1)]
    out.append("EOF")
    return "\n".join(out) + "\n"
