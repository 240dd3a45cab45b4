"""Benchmark problems: generators, MILP builders, file I/O and small-scale oracles."""

from __future__ import annotations

from dataclasses import dataclass
from types import ModuleType

import numpy as np

from ..milp import MilpModel
from . import cwlp, jssp, mcnd, rect, tsp
from .base import (InfeasibleDraw, InvariantViolation, ProblemError, ProblemInstance,
                   TooLargeForOracle)


@dataclass(frozen=True)
class ProblemKind:
    kind: str
    module: ModuleType
    instance_cls: type
    # size parameter names accepted by the generator
    size_keys: tuple

    def from_json_payload(self, obj):
        return self.instance_cls.from_json(obj)

    def validate(self, payload):
        self.module.validate(payload)


REGISTRY = {
    "tsp": ProblemKind("tsp", tsp, tsp.TspInstance, ("n",)),
    "mcnd": ProblemKind("mcnd", mcnd, mcnd.McndInstance, ("nodes", "arcs", "commodities")),
    "cwlp": ProblemKind("cwlp", cwlp, cwlp.CwlpInstance, ("customers", "warehouses")),
    "jssp": ProblemKind("jssp", jssp, jssp.JsspInstance, ("jobs", "machines")),
    "rect": ProblemKind("rect", rect, rect.RectInstance, ("N",)),
}
KINDS = tuple(REGISTRY)


def kind_of(name: str) -> ProblemKind:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ProblemError(f"unknown problem kind {name!r}; known: {', '.join(KINDS)}") from None


def make_instance(kind: str, payload, seed=None) -> ProblemInstance:
    kind_of(kind).validate(payload)
    return ProblemInstance(kind, payload, seed)


def generate(kind: str, size: dict, seed: int) -> ProblemInstance:
    """Deterministic random instance for ``(kind, size, seed)``."""
    spec = kind_of(kind)
    unknown = set(size) - set(spec.size_keys)
    if unknown:
        raise ProblemError(f"unknown size parameters for {kind}: {sorted(unknown)}")
    for k, v in size.items():
        if not isinstance(v, int) or v <= 0:
            raise ProblemError(f"size parameter {k} must be a positive integer")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _kind_salt(kind)]))
    payload = spec.module.generate(size, rng)
    spec.validate(payload)
    return ProblemInstance(kind, payload, int(seed))


def _kind_salt(kind: str) -> int:
    return sum((i + 1) * ord(ch) for i, ch in enumerate(kind))


def build_model(inst: ProblemInstance) -> MilpModel:
    spec = kind_of(inst.kind)
    spec.validate(inst.payload)
    return spec.module.build_model(inst.payload)


def symbol_table(inst: ProblemInstance):
    return kind_of(inst.kind).module.symbol_table(inst.payload)


def brute_force_optimum(inst: ProblemInstance):
    """Exact optimum by enumeration (``rect`` uses a long solver run instead)."""
    return kind_of(inst.kind).module.brute_force(inst.payload)


def canonicalize_solution(inst: ProblemInstance, values: dict) -> dict:
    """Normalise a solver incumbent (round integers, derived continuous values)."""
    return kind_of(inst.kind).module.canonicalize(inst.payload, values)


def describe(kind: str) -> str:
    return kind_of(kind).module.describe()


from .io import ParseError, UnsupportedFormat, read_instance, write_instance  # noqa: E402

__all__ = [
    "KINDS", "REGISTRY", "ProblemInstance", "ProblemError", "InvariantViolation", "TooLargeForOracle",
    "InfeasibleDraw", "ParseError", "UnsupportedFormat", "generate", "build_model", "symbol_table",
    "brute_force_optimum", "canonicalize_solution", "read_instance", "write_instance", "make_instance",
    "describe",
]
