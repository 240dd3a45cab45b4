"""Evolutionary search over cut families.

One coordinator owns the population, both RNG streams (``ga`` for operator
draws and selection, ``agents`` for the agents themselves) and the agent
statistics.  Every completed generation is checkpointed under
``gen_####/`` so a run can resume from the last one.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evaluation, verification
from .agents import (CROSSOVER, INITIALIZER, MUTATION, AgentResponse, EnvelopeError, ParentCut,
                     PromptContext, specs_of_kind)
from .events import EventLog
from .problems.io import atomic_write_text

log = logging.getLogger(__name__)

STAT_COLUMNS = ("agent", "code_fail_pct", "osp_fail_pct", "not_useful_pct", "success_rate_pct", "mean_delta_f")


class EvolutionError(Exception):
    pass


class InitializationStalled(EvolutionError):
    pass


class GenerationStalled(EvolutionError):
    pass


@dataclass(frozen=True)
class GaConfig:
    T: int = 20
    mu: int = 8
    P_c: float = 0.7
    P_m: float = 0.3
    r_e: float = 0.2
    max_retries: int = 3
    seed: int = 42
    stall_limit: int = 20
    attempt_cap_factor: int = 10

    def __post_init__(self):
        if not (0 <= self.P_c <= 1 and 0 <= self.P_m <= 1 and self.P_c + self.P_m <= 1 + 1e-12):
            raise ValueError("need P_c, P_m in [0, 1] with P_c + P_m <= 1")
        if self.P_c + self.P_m <= 0:
            raise ValueError("P_c + P_m must be positive")
        if not 0 < self.r_e < 1:
            raise ValueError("r_e must lie in (0, 1)")
        if self.mu < 2:
            raise ValueError("mu must be >= 2")
        if self.T < 0 or self.max_retries < 1:
            raise ValueError("T must be >= 0 and max_retries >= 1")

    @property
    def n_elites(self) -> int:
        # the epsilon keeps r_e * mu = 2.0000000001 from rounding up to 3
        return min(self.mu, math.ceil(self.r_e * self.mu - 1e-9))

    def to_json(self):
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


@dataclass
class Individual:
    family_id: str
    source: str
    idea: str
    fit: float
    generation: int
    agent: str
    parents: tuple = ()
    d: list = field(default_factory=list)

    def sort_key(self):
        return (-self.fit, self.generation, self.family_id)

    def to_json(self):
        return {"family_id": self.family_id, "source": self.source, "idea": self.idea, "fit": self.fit,
                "generation": self.generation, "agent": self.agent, "parents": list(self.parents), "d": self.d}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["family_id"], obj["source"], obj["idea"], obj["fit"], obj["generation"], obj["agent"],
                   tuple(obj["parents"]), obj.get("d", []))


# ---------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------

@dataclass
class AgentCounter:
    attempts: int = 0
    code_fail: int = 0
    osp_fail: int = 0
    not_useful: int = 0
    success: int = 0
    deltas: list = field(default_factory=list)


class AgentStats:
    """Per-agent attempt outcomes. Duplicate rejections count as code failures."""

    def __init__(self):
        self.by_agent: dict[str, AgentCounter] = {}

    def _c(self, agent):
        return self.by_agent.setdefault(agent, AgentCounter())

    def record_attempt(self, agent: str, rec: verification.VerificationRecord) -> None:
        c = self._c(agent)
        c.attempts += 1
        stage = rec.failed_stage
        if stage in (verification.CODE, verification.DUPLICATE):
            c.code_fail += 1
        elif stage == verification.OSP:
            c.osp_fail += 1
        elif stage == verification.USEFUL:
            c.not_useful += 1
        else:
            c.success += 1

    def record_improvement(self, agent: str, f_parent: float, f_child: float) -> None:
        self._c(agent).deltas.append((f_child - f_parent) / f_parent)

    def rows(self) -> list:
        out = []
        for name in sorted(self.by_agent):
            c = self.by_agent[name]
            n = max(c.attempts, 1)
            mean_df = float(np.mean(c.deltas)) if c.deltas else 0.0
            out.append((name, 100.0 * c.code_fail / n, 100.0 * c.osp_fail / n, 100.0 * c.not_useful / n,
                        100.0 * c.success / n, mean_df))
        return out

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(STAT_COLUMNS)
        for r in self.rows():
            w.writerow([r[0]] + [f"{v:.4f}" for v in r[1:]])
        return buf.getvalue()

    def to_json(self):
        return {k: dict(v.__dict__) for k, v in self.by_agent.items()}

    @classmethod
    def from_json(cls, obj):
        s = cls()
        for k, v in obj.items():
            s.by_agent[k] = AgentCounter(**v)
        return s


# ---------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------

def select_parents(pop: list, k: int, rng) -> list:
    """``k`` draws without replacement, each proportional to fitness among the remaining members."""
    if k > len(pop):
        raise ValueError("k larger than the population")
    pool = list(pop)
    chosen = []
    for _ in range(k):
        weights = np.array([ind.fit for ind in pool], dtype=float)
        u = rng.random() * weights.sum()
        idx = int(np.searchsorted(np.cumsum(weights), u, side="right"))
        idx = min(idx, len(pool) - 1)
        chosen.append(pool.pop(idx))
    return chosen


def elites(pop: list, n: int) -> list:
    return sorted(pop, key=Individual.sort_key)[:n]


def draw_operator(cfg: GaConfig, rng) -> str:
    """One uniform draw: crossover below P_c, mutation below P_c + P_m, otherwise draw again."""
    while True:
        r = rng.random()
        if r < cfg.P_c:
            return CROSSOVER
        if r < cfg.P_c + cfg.P_m:
            return MUTATION


# ---------------------------------------------------------------------
# the coordinator
# ---------------------------------------------------------------------

@dataclass
class Problem:
    """What the agents are told about the problem."""

    kind: str
    description: str
    symbols: str


class Evolution:
    def __init__(self, cfg: GaConfig, agent, problem: Problem, dv, eval_set, run_dir=None,
                 eval_seed: int = 42, workers: int = 1):
        self.cfg = cfg
        self.agent = agent
        self.problem = problem
        self.dv = dv
        self.eval_set = eval_set
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.eval_seed = eval_seed
        self.workers = workers
        ss = np.random.SeedSequence(cfg.seed)
        ga_ss, ag_ss = ss.spawn(2)
        self.rng = np.random.default_rng(ga_ss)
        self.agent_rng = np.random.default_rng(ag_ss)
        self.stats = AgentStats()
        self.archive: dict[str, str] = {}  # family_id -> idea of every accepted cut
        self.lineage: list = []
        self.population: list = []
        self.generation = -1
        self.events = EventLog(self.run_dir / "events.jsonl" if self.run_dir else None)
        self.consecutive_failures = 0

    # -- persistence ---------------------------------------------------
    def _gen_dir(self, g) -> Path:
        return self.run_dir / f"gen_{g:04d}"

    def checkpoint(self) -> None:
        if self.run_dir is None:
            return
        d = self._gen_dir(self.generation)
        d.mkdir(parents=True, exist_ok=True)
        atomic_write_text(d / "population.json",
                          json.dumps([i.to_json() for i in self.population], indent=1))
        atomic_write_text(d / "lineage.json",
                          json.dumps([i.to_json() for i in self.lineage if i.generation == self.generation],
                                     indent=1))
        state = {"generation": self.generation, "rng": self.rng.bit_generator.state,
                 "agent_rng": self.agent_rng.bit_generator.state,
                 "agent_state": self.agent.state() if hasattr(self.agent, "state") else {},
                 "stats": self.stats.to_json(), "archive": self.archive,
                 "n_events": len(self.events.events)}
        atomic_write_text(d / "state.json", json.dumps(state, default=int))
        atomic_write_text(self.run_dir / "stats.csv", self.stats.csv_text())

    def write_run_json(self, extra: dict | None = None) -> None:
        if self.run_dir is None:
            return
        self.run_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(self.run_dir / "run.json",
                          json.dumps({"ga": self.cfg.to_json(), "problem": self.problem.kind, **(extra or {})},
                                     indent=1))

    def last_completed(self) -> int | None:
        if self.run_dir is None or not self.run_dir.exists():
            return None
        gens = sorted(int(p.name[4:]) for p in self.run_dir.glob("gen_*") if (p / "state.json").exists())
        return gens[-1] if gens else None

    def resume(self) -> bool:
        """Restore the last completed generation; returns False when there is none."""
        g = self.last_completed()
        if g is None:
            return False
        d = self._gen_dir(g)
        state = json.loads((d / "state.json").read_text())
        self.generation = g
        self.rng.bit_generator.state = state["rng"]
        self.agent_rng.bit_generator.state = state["agent_rng"]
        if hasattr(self.agent, "restore"):
            self.agent.restore(state["agent_state"])
        self.stats = AgentStats.from_json(state["stats"])
        self.archive = dict(state["archive"])
        self.population = [Individual.from_json(o) for o in json.loads((d / "population.json").read_text())]
        self.lineage = []
        for k in range(g + 1):
            self.lineage += [Individual.from_json(o)
                             for o in json.loads((self._gen_dir(k) / "lineage.json").read_text())]
        # drop events of the interrupted generation so the log matches an uninterrupted run
        path = self.run_dir / "events.jsonl"
        if path.exists():
            lines = path.read_text().splitlines(keepends=True)[: state["n_events"]]
            atomic_write_text(path, "".join(lines))
        self.events.events = [{k: v for k, v in json.loads(x).items() if k != "ts"}
                              for x in (path.read_text().splitlines() if path.exists() else [])]
        for gd in self.run_dir.glob("gen_*"):
            if int(gd.name[4:]) > g:
                for f in gd.iterdir():
                    f.unlink()
                gd.rmdir()
        return True

    # -- one candidate -------------------------------------------------
    def _context(self, parents=(), feedback=()):
        return PromptContext(self.problem.kind, self.problem.description, self.problem.symbols,
                             tuple(self.archive.values()), tuple(parents), tuple(feedback))

    def _ask(self, spec, ctx):
        try:
            resp = self.agent.respond(spec, ctx, self.agent_rng)
        except EnvelopeError as exc:
            return verification.SourceFailure(str(exc)), str(exc)
        return resp.source(), resp.raw or resp.source()

    def produce(self, spec, parents=()):
        """Ask ``spec`` for a cut, verify it with retries and evaluate it.

        Returns an :class:`Individual` or ``None`` when the retries ran out.
        """
        pcs = [ParentCut(_strip_idea(p.source), p.idea, p.fit) for p in parents]
        feedback = []
        source, raw = self._ask(spec, self._context(pcs))
        last_raw = [raw]

        def revise(diagnostic):
            feedback.append((last_raw[0], diagnostic))
            src, r = self._ask(spec, self._context(pcs, feedback))
            last_raw[0] = r
            return src

        def precheck(fam):
            if fam.family_id in self.archive:
                return f"duplicate of an existing cut (family {fam.family_id}); propose something different"
            return None

        ctx = verification.RetryContext(
            max_attempts=self.cfg.max_retries, revise=revise, precheck=precheck,
            on_attempt=lambda rec: self.stats.record_attempt(spec.name, rec), log=self.events,
            tag={"agent": spec.name, "generation": self.generation + 1})
        try:
            rec, comp = verification.verify(source, self.dv, ctx)
        except verification.RetriesExhausted as exc:
            self.events.emit("candidate_discarded", agent=spec.name, generation=self.generation + 1,
                             last_stage=exc.record.failed_stage)
            return None
        report = evaluation.fitness(comp, self.eval_set, self.eval_seed, self.workers)
        f_parent = float(np.mean([p.fit for p in parents])) if parents else evaluation.NEUTRAL_FITNESS
        self.stats.record_improvement(spec.name, f_parent, report.fit)
        ind = Individual(comp.family_id, comp.family.source_text, comp.family.idea, report.fit,
                         self.generation + 1, spec.name, tuple(p.family_id for p in parents), report.d)
        self.archive[ind.family_id] = ind.idea
        self.lineage.append(ind)
        self.events.emit("accepted", agent=spec.name, generation=ind.generation, family_id=ind.family_id,
                         fit=ind.fit, parents=list(ind.parents))
        return ind

    # -- phases --------------------------------------------------------
    def initialize_population(self) -> list:
        spec = specs_of_kind(INITIALIZER)[0]
        pop = []
        self.consecutive_failures = 0
        while len(pop) < self.cfg.mu:
            ind = self.produce(spec)
            if ind is None:
                self.consecutive_failures += 1
                if self.consecutive_failures >= self.cfg.stall_limit:
                    self.population = pop
                    raise InitializationStalled(
                        f"{self.consecutive_failures} consecutive candidates failed; {len(pop)} accepted")
                continue
            self.consecutive_failures = 0
            pop.append(ind)
        self.population = pop
        self.generation = 0
        self.checkpoint()
        return pop

    def step_generation(self) -> list:
        cfg = self.cfg
        pop = sorted(self.population, key=Individual.sort_key)
        new = list(elites(pop, cfg.n_elites))
        pools = {CROSSOVER: specs_of_kind(CROSSOVER), MUTATION: specs_of_kind(MUTATION)}
        trials = 0
        while len(new) < cfg.mu:
            if trials >= cfg.attempt_cap_factor * cfg.mu:
                raise GenerationStalled(f"generation {self.generation + 1}: {len(new)}/{cfg.mu} after {trials} trials")
            trials += 1
            op = draw_operator(cfg, self.rng)
            pool = pools[op]
            spec = pool[int(self.rng.integers(0, len(pool)))]
            parents = select_parents(pop, spec.arity, self.rng)
            child = self.produce(spec, parents)
            if child is not None:
                new.append(child)
        self.population = new
        self.generation += 1
        self.checkpoint()
        return new

    def run(self, resume: bool = False) -> list:
        """Run (or continue) to generation ``T``; returns the final population."""
        if not (resume and self.resume()):
            self.write_run_json()
            self.initialize_population()
        while self.generation < self.cfg.T:
            self.step_generation()
        return self.population

    # -- views ---------------------------------------------------------
    def lineage_graph(self) -> list:
        return [(i.family_id, i.generation, i.agent, i.parents, i.fit) for i in self.lineage]


def _strip_idea(source: str) -> str:
    lines = source.splitlines()
    while lines and lines[0].lstrip().startswith("//"):
        lines.pop(0)
    return "\n".join(lines).strip() + "\n"


def load_generations(run_dir) -> list:
    """Populations of every completed generation (list of lists of :class:`Individual`)."""
    run_dir = Path(run_dir)
    out = []
    for d in sorted(run_dir.glob("gen_*")):
        if (d / "population.json").exists():
            out.append([Individual.from_json(o) for o in json.loads((d / "population.json").read_text())])
    return out


__all__ = ["GaConfig", "Individual", "AgentStats", "Evolution", "Problem", "select_parents", "elites",
           "draw_operator", "InitializationStalled", "GenerationStalled", "AgentResponse", "load_generations"]
