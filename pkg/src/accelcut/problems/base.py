"""Shared pieces of the benchmark problem modules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any


class ProblemError(Exception):
    pass


class InvariantViolation(ProblemError):
    pass


class TooLargeForOracle(ProblemError):
    pass


class InfeasibleDraw(ProblemError):
    pass


@dataclass(frozen=True)
class ProblemInstance:
    """A benchmark instance: ``kind`` tags which payload type ``payload`` is."""

    kind: str
    payload: Any
    seed: int | None = None

    def to_json(self) -> dict:
        return {"kind": self.kind, "payload": self.payload.to_json(), "seed": self.seed}


def check(cond: bool, msg: str) -> None:
    if not cond:
        raise InvariantViolation(msg)


def as_int(x):
    """Return ``x`` as an int when it is integral (keeps json output tidy)."""
    if isinstance(x, float) and x.is_integer():
        return int(x)
    return x
