"""Agent specifications and prompt rendering.

Prompts have five sections (role, task, requirements, input, output).  The
output contract is a single JSON object ``{"dsl": ..., "idea": ...}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

INITIALIZER, MUTATION, CROSSOVER = "initializer", "mutation", "crossover"
ARITY = {INITIALIZER: 0, MUTATION: 1, CROSSOVER: 2}


class ContextArityMismatch(ValueError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    name: str
    kind: str
    instruction: str

    @property
    def arity(self) -> int:
        return ARITY[self.kind]


SPECS = (
    AgentSpec("initializer", INITIALIZER,
              "Propose one new family of inequalities that is different from every idea listed below."),
    AgentSpec("general_mutation", MUTATION,
              "Modify the input cut so that it becomes tighter or more widely applicable while staying valid."),
    AgentSpec("lifted_mutation", MUTATION,
              "Strengthen the input cut by lifting: raise coefficients of variables not yet exploited "
              "as far as the structure of the model allows."),
    AgentSpec("exploratory_mutation", MUTATION,
              "Use the input cut only as a starting point and move to a noticeably different family of "
              "inequalities."),
    AgentSpec("intersection_crossover", CROSSOVER,
              "Build one cut that keeps what both parents enforce, so that it respects each of them."),
    AgentSpec("complementary_crossover", CROSSOVER,
              "Build one cut that covers what the parents leave out, combining their distinct strengths."),
    AgentSpec("hybrid_crossover", CROSSOVER,
              "Take the structure (quantifiers, index sets) of the first parent and the numeric or "
              "conditional parts of the second."),
    AgentSpec("min_violation_crossover", CROSSOVER,
              "Combine the parents so that the result is as unlikely as possible to cut off an optimal "
              "solution while still removing LP-relaxation points."),
)

SPEC_BY_NAME = {s.name: s for s in SPECS}


def specs_of_kind(kind: str) -> list:
    return [s for s in SPECS if s.kind == kind]


@dataclass(frozen=True)
class ParentCut:
    dsl: str
    idea: str
    score: float


@dataclass(frozen=True)
class PromptContext:
    """Everything a prompt is rendered from.

    ``feedback`` is a sequence of ``(previous_response_text, diagnostic)``
    pairs, one per failed attempt, oldest first.
    """

    problem_kind: str
    model_description: str
    symbols: str
    prior_ideas: tuple = ()
    parents: tuple = ()
    feedback: tuple = ()
    extra: dict = field(default_factory=dict, compare=False)


GRAMMAR_SHEET = """\
Cut language cheat-sheet:
  // idea: <one line rationale>        (optional leading comment)
  aux z[i in V]: binary;               (auxiliary variables, optional; also continuous or continuous[lo, hi])
  forall i in V, j in V \\ {1} if i != j: <lhs> <= <rhs>;
  relations: <=  >=  ==        conditions: < <= > >= == != and or not, "x in S"
  sets: named sets, set functions such as inarcs(v), literals {1, 2}, ranges {1..n}, difference S \\ T
  aggregates over binders: sum(i in I: e), min(...), max(...), count(i in I: cond), mincover(j in J: v, target)
  list forms: min(e1, e2, ...), max(e1, e2, ...); card(S) is the size of a set
  tuple binders: (a, b) in I; a tuple index u[a] expands to u[i, j]
  decision variables must appear linearly; coefficients must be constant expressions"""


def _section(title, body):
    return f"## {title}\n{body.strip()}\n"


def render_prompt(spec: AgentSpec, ctx: PromptContext) -> list:
    """Deterministic chat message sequence for ``spec`` in context ``ctx``."""
    if len(ctx.parents) != spec.arity:
        raise ContextArityMismatch(f"{spec.name} takes {spec.arity} parent cut(s), got {len(ctx.parents)}")
    role = ("You are an expert in mixed-integer linear programming who designs acceleration cuts: "
            "inequalities added to a formulation so a branch-and-bound solver closes the gap faster.")
    if spec.kind == INITIALIZER:
        task = "Write one new family of cuts for the model below."
    elif spec.kind == MUTATION:
        task = "Rewrite the input cut into an improved variant."
    else:
        task = "Combine the two input cuts into a single new cut."
    reqs = "\n".join([
        f"- {spec.instruction}",
        "- The cut must keep at least one optimal solution of every instance feasible.",
        "- The cut must remove the optimum of the LP relaxation on at least one instance.",
        "- Reference only the symbols listed under Input; write the cut in the cut language.",
    ])
    parts = [_section("Role", role), _section("Task", task), _section("Requirements", reqs)]
    inp = [f"Problem: {ctx.problem_kind}", "", "Formulation:", ctx.model_description.strip(), "",
           "Symbols available to cuts:", ctx.symbols.strip()]
    if spec.kind == INITIALIZER:
        inp += ["", "Ideas proposed so far:"]
        inp += [f"- {idea}" for idea in ctx.prior_ideas] or ["- (none)"]
    else:
        for k, p in enumerate(ctx.parents, start=1):
            label = "Input cut" if spec.arity == 1 else f"Parent {k}"
            inp += ["", f"{label} (score {p.score:.4f}):", f"idea: {p.idea}", "cut:", p.dsl.strip()]
    parts.append(_section("Input", "\n".join(inp)))
    out = ("Reply with exactly one JSON object and nothing else:\n"
           '{"dsl": "<cut source>", "idea": "<one or two sentences>"}\n\n' + GRAMMAR_SHEET)
    parts.append(_section("Output", out))
    messages = [{"role": "system", "content": role},
                {"role": "user", "content": "\n".join(parts)}]
    for previous, diagnostic in ctx.feedback:
        messages.append({"role": "assistant", "content": previous})
        messages.append({"role": "user", "content":
                         f"Your cut was rejected.\n{diagnostic}\nRevise the cut and reply in the same JSON format."})
    return messages
