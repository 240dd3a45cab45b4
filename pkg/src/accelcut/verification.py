"""Three-stage verification of cut candidates.

Stage ``code`` parses, checks and instantiates the cut on every verification
instance.  Stage ``osp`` makes sure no stored optimum is cut off.  Stage
``useful`` requires at least one stored LP optimum to be separated.  Later
stages only run when the earlier ones passed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import dsl, milp, problems, solver
from .problems.io import atomic_write_text, instance_from_json

CODE, OSP, USEFUL, DUPLICATE = "code", "osp", "useful", "duplicate"
STAGES = (CODE, OSP, USEFUL)
DEFAULT_MAX_ATTEMPTS = 3


class VerificationError(Exception):
    pass


class CorruptArtifact(VerificationError):
    """A stored solution failed its reload probe."""


@dataclass(frozen=True)
class SourceFailure:
    """Stands in for cut source when the producer failed to deliver any (e.g. a malformed reply)."""

    message: str


class RetriesExhausted(VerificationError):
    def __init__(self, record: "VerificationRecord", history: list):
        super().__init__(f"candidate rejected after {record.attempts_used} attempts "
                         f"(last failure: {record.failed_stage})")
        self.record = record
        self.history = history


# ---------------------------------------------------------------------
# verification set
# ---------------------------------------------------------------------

@dataclass
class VerifyEntry:
    """One D_v instance with its stored optimum and LP-relaxation optimum."""

    name: str
    instance: problems.ProblemInstance
    optimum: dict
    objective: float
    lp_solution: dict
    lp_objective: float
    gap_ref: float
    _model: milp.MilpModel | None = field(default=None, repr=False, compare=False)

    @property
    def model(self) -> milp.MilpModel:
        if self._model is None:
            self._model = problems.build_model(self.instance)
        return self._model

    def to_json(self) -> dict:
        return {"name": self.name, "instance": self.instance.to_json(),
                "optimum": milp.values_to_json(self.optimum), "objective": self.objective,
                "lp_solution": milp.values_to_json(self.lp_solution),
                "lp_objective": self.lp_objective, "gap_ref": self.gap_ref}

    @classmethod
    def from_json(cls, obj) -> "VerifyEntry":
        return cls(obj["name"], instance_from_json(obj["instance"]),
                   milp.values_from_json(obj["optimum"]), obj["objective"],
                   milp.values_from_json(obj["lp_solution"]), obj["lp_objective"], obj["gap_ref"])


@dataclass
class VerificationSet:
    entries: list

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def kind(self) -> str:
        return self.entries[0].instance.kind

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps({"entries": [e.to_json() for e in self.entries]}, indent=1))

    @classmethod
    def load(cls, path, reprobe: bool = True) -> "VerificationSet":
        obj = json.loads(Path(path).read_text())
        vs = cls([VerifyEntry.from_json(e) for e in obj["entries"]])
        if reprobe:
            vs.reprobe()
        return vs

    def reprobe(self) -> None:
        """Confirm every stored optimum is feasible for its base model."""
        for e in self.entries:
            fixed = milp.fix_assignment(e.model, e.optimum)
            if solver.feasibility_probe(fixed) != solver.FEASIBLE:
                raise CorruptArtifact(f"stored optimum of {e.name} is infeasible for its base model")


# ---------------------------------------------------------------------
# records
# ---------------------------------------------------------------------

@dataclass
class StageResult:
    stage: str
    passed: bool
    message: str = ""
    instance: str | None = None
    span: tuple | None = None
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"stage": self.stage, "passed": self.passed}
        if self.message:
            out["message"] = self.message
        if self.instance is not None:
            out["instance"] = self.instance
        if self.span is not None:
            out["span"] = list(self.span)
        if self.detail:
            out["detail"] = self.detail
        return out

    def diagnostic(self) -> str:
        """Feedback text handed back to the producing agent."""
        head = f"[{self.stage} check failed]"
        where = f" on instance {self.instance}" if self.instance else ""
        pos = f" at line {self.span[0]}, column {self.span[1]}" if self.span else ""
        return f"{head}{where}{pos}: {self.message}"


@dataclass
class VerificationRecord:
    family_id: str | None
    code: StageResult
    osp: StageResult | None = None
    useful: StageResult | None = None
    attempts_used: int = 1
    idea: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.useful is not None and self.useful.passed)

    @property
    def stages(self) -> list:
        return [s for s in (self.code, self.osp, self.useful) if s is not None]

    @property
    def failed_stage(self) -> str | None:
        for s in self.stages:
            if not s.passed:
                return s.stage
        return None

    @property
    def failure(self) -> StageResult | None:
        for s in self.stages:
            if not s.passed:
                return s
        return None

    def to_json(self) -> dict:
        return {"family_id": self.family_id, "attempts_used": self.attempts_used,
                "passed": self.passed, "stages": [s.to_json() for s in self.stages]}


@dataclass
class CompiledCut:
    """A checked family together with its rows on each verification instance."""

    family: dsl.CutFamily
    checked: dsl.CheckedCut
    rows: dict  # entry name -> (rows, aux)

    @property
    def family_id(self):
        return self.family.family_id


# ---------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------

def check_code(source, dv: VerificationSet) -> tuple[StageResult, CompiledCut | None]:
    """Parse, check and instantiate on every D_v instance."""
    try:
        fam = source if isinstance(source, dsl.CutFamily) else dsl.parse(source)
    except dsl.ParseError as exc:
        return StageResult(CODE, False, exc.render(), span=(exc.line, exc.col),
                           detail={"error": "parse", "expected": list(exc.expected)}), None
    first = dv.entries[0]
    try:
        checked = dsl.check(fam, problems.symbol_table(first.instance), first.instance.kind)
    except dsl.CheckFailed as exc:
        errs = exc.errors
        sp = errs[0].span
        return StageResult(CODE, False, "; ".join(str(e) for e in errs),
                           span=(sp.line, sp.col) if sp is not None and sp.line else None,
                           detail={"error": "semantic", "count": len(errs)}), None
    rows = {}
    for e in dv:
        try:
            rows[e.name] = dsl.instantiate(checked, e.instance)
        except dsl.EvalError as exc:
            sp = exc.span
            return StageResult(CODE, False, str(exc), instance=e.name,
                               span=(sp.line, sp.col) if sp is not None and sp.line else None,
                               detail={"error": "eval"}), None
        except milp.ModelError as exc:
            return StageResult(CODE, False, str(exc), instance=e.name, detail={"error": "model"}), None
    return StageResult(CODE, True), CompiledCut(fam, checked, rows)


def _compiled(cut, dv) -> CompiledCut:
    if isinstance(cut, CompiledCut):
        return cut
    if isinstance(cut, dsl.CheckedCut):
        return CompiledCut(cut.family, cut, {e.name: dsl.instantiate(cut, e.instance) for e in dv})
    res, comp = check_code(cut, dv)
    if comp is None:
        raise VerificationError(res.diagnostic())
    return comp


def _with_cut(entry: VerifyEntry, comp: CompiledCut) -> milp.MilpModel:
    rows, aux = comp.rows[entry.name]
    return milp.append_cut_constraints(entry.model, rows, aux, comp.family_id)


def osp_probe(entry: VerifyEntry, rows, aux=(), family_id="probe", cap_seconds=solver.PROBE_CAP_SECONDS) -> bool:
    """True when the stored optimum of ``entry`` survives the given rows."""
    m = milp.append_cut_constraints(entry.model, rows, aux, family_id)
    return solver.feasibility_probe(milp.fix_assignment(m, entry.optimum), cap_seconds) == solver.FEASIBLE


def separates_lp(entry: VerifyEntry, rows, aux=(), family_id="probe", cap_seconds=solver.PROBE_CAP_SECONDS) -> bool:
    """True when the stored LP optimum of ``entry`` violates the rows for every choice of aux values."""
    m = milp.relax(milp.append_cut_constraints(entry.model, rows, aux, family_id))
    fixed = milp.fix_assignment(m, entry.lp_solution, strict_integrality=False)
    return solver.feasibility_probe(fixed, cap_seconds) == solver.INFEASIBLE


def check_osp(cut, dv: VerificationSet, cap_seconds: float = solver.PROBE_CAP_SECONDS) -> StageResult:
    """Pass iff every stored optimum stays feasible (aux variables free)."""
    comp = _compiled(cut, dv)
    for e in dv:
        rows, aux = comp.rows[e.name]
        if not osp_probe(e, rows, aux, comp.family_id, cap_seconds):
            return StageResult(OSP, False, "the cut excludes the stored optimal solution", instance=e.name,
                               detail={"objective": e.objective})
    return StageResult(OSP, True)


def check_useful(cut, dv: VerificationSet, cap_seconds: float = solver.PROBE_CAP_SECONDS) -> StageResult:
    """Pass iff at least one stored LP optimum is cut off."""
    comp = _compiled(cut, dv)
    for e in dv:
        rows, aux = comp.rows[e.name]
        if separates_lp(e, rows, aux, comp.family_id, cap_seconds):
            return StageResult(USEFUL, True, instance=e.name)
    return StageResult(USEFUL, False, "the cut does not separate the LP-relaxation optimum of any "
                                      "verification instance")


def verify_once(source, dv: VerificationSet, cap_seconds: float = solver.PROBE_CAP_SECONDS) -> tuple:
    """Run the three stages once. Returns ``(record, compiled_or_None)``.

    :class:`accelcut.solver.BackendError` propagates: infrastructure faults
    are not verdicts on the cut.
    """
    code, comp = check_code(source, dv)
    if comp is None:
        return VerificationRecord(None, code), None
    rec = VerificationRecord(comp.family_id, code, idea=comp.family.idea)
    rec.osp = check_osp(comp, dv, cap_seconds)
    if rec.osp.passed:
        rec.useful = check_useful(comp, dv, cap_seconds)
    return rec, comp


# ---------------------------------------------------------------------
# retry loop
# ---------------------------------------------------------------------

@dataclass
class RetryContext:
    """``revise(diagnostic) -> new source`` is the feedback channel to the producing agent.

    ``precheck(family) -> message | None`` can veto a parsed family before the
    solver stages (used for duplicate suppression). ``on_attempt(record)`` sees
    every attempt, successful or not.
    """

    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    revise: Callable | None = None
    precheck: Callable | None = None
    on_attempt: Callable | None = None
    log: object = None  # EventLog
    cap_seconds: float = solver.PROBE_CAP_SECONDS
    tag: dict = field(default_factory=dict)


def verify(cut_source, dv: VerificationSet, ctx: RetryContext | None = None):
    """Verify with feedback-driven retries; each revision restarts at the code check.

    Returns ``(record, compiled)`` for the first passing attempt or raises
    :class:`RetriesExhausted`.
    """
    ctx = ctx or RetryContext(max_attempts=1)
    history = []
    source = cut_source
    attempt = 1
    while True:
        rec, comp = _attempt(source, dv, ctx)
        rec.attempts_used = attempt
        history.append(rec)
        if ctx.log is not None:
            for st in rec.stages:
                ctx.log.emit("verify_stage", attempt=attempt, family_id=rec.family_id, **ctx.tag, **st.to_json())
        if ctx.on_attempt is not None:
            ctx.on_attempt(rec)
        if rec.passed:
            return rec, comp
        if attempt >= ctx.max_attempts or ctx.revise is None:
            raise RetriesExhausted(rec, history)
        source = ctx.revise(rec.failure.diagnostic())
        attempt += 1


def _attempt(source, dv, ctx):
    if isinstance(source, SourceFailure):
        return VerificationRecord(None, StageResult(CODE, False, source.message, detail={"error": "envelope"})), None
    if ctx.precheck is not None:
        try:
            fam = source if isinstance(source, dsl.CutFamily) else dsl.parse(source)
        except dsl.ParseError:
            fam = None
        if fam is not None:
            msg = ctx.precheck(fam)
            if msg:
                return VerificationRecord(fam.family_id, StageResult(DUPLICATE, False, msg),
                                          idea=fam.idea), None
    return verify_once(source, dv, ctx.cap_seconds)
