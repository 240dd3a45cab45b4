import json

import httpx
import numpy as np
import pytest

from accelcut import agents, builtin_cuts, dsl
from accelcut.agents import mock
from accelcut.agents.prompts import CROSSOVER, INITIALIZER, MUTATION

CTX = dict(problem_kind="cwlp", model_description="min sum f y + sum c x", symbols="y[j], x[i, j], u[j], d[i]")


def ctx(**kw):
    return agents.PromptContext(**{**CTX, **kw})


P1 = agents.ParentCut("sum(j in J: y[j]) >= 1;", "open one", 10.5)
P2 = agents.ParentCut("forall i in I: x[i, 1] <= y[1];", "link first warehouse", 9.25)


# -- specs and prompts ---------------------------------------------------

def test_eight_agents_with_role_split():
    assert len(agents.SPECS) == 8
    kinds = [s.kind for s in agents.SPECS]
    assert kinds.count(INITIALIZER) == 1 and kinds.count(MUTATION) == 3 and kinds.count(CROSSOVER) == 4
    assert len(agents.SPEC_BY_NAME) == 8


def test_initializer_prompt_lists_prior_ideas():
    msgs = agents.render_prompt(agents.SPEC_BY_NAME["initializer"], ctx(prior_ideas=("idea A", "idea B")))
    body = msgs[1]["content"]
    assert "- idea A\n- idea B" in body
    for title in ("Role", "Task", "Requirements", "Input", "Output"):
        assert f"## {title}" in body
    assert '{"dsl"' in body


def test_initializer_prompt_without_ideas():
    body = agents.render_prompt(agents.SPEC_BY_NAME["initializer"], ctx())[1]["content"]
    assert "- (none)" in body


def test_crossover_prompt_has_both_parents():
    body = agents.render_prompt(agents.SPEC_BY_NAME["hybrid_crossover"], ctx(parents=(P1, P2)))[1]["content"]
    assert "Parent 1 (score 10.5000)" in body and "Parent 2 (score 9.2500)" in body
    assert body.index(P1.dsl) < body.index(P2.dsl)


def test_mutation_prompt_has_input_cut():
    body = agents.render_prompt(agents.SPEC_BY_NAME["lifted_mutation"], ctx(parents=(P1,)))[1]["content"]
    assert "Input cut (score 10.5000)" in body and "idea: open one" in body


def test_feedback_appended_at_end():
    fb = (("first reply", "[osp check failed]: excluded"), ("second reply", "[code check failed]: bad"))
    msgs = agents.render_prompt(agents.SPEC_BY_NAME["general_mutation"], ctx(parents=(P1,), feedback=fb))
    assert [m["role"] for m in msgs] == ["system", "user", "assistant", "user", "assistant", "user"]
    assert msgs[2]["content"] == "first reply"
    assert "[code check failed]: bad" in msgs[-1]["content"]


def test_prompt_is_pure():
    spec = agents.SPEC_BY_NAME["complementary_crossover"]
    a = json.dumps(agents.render_prompt(spec, ctx(parents=(P1, P2))))
    b = json.dumps(agents.render_prompt(spec, ctx(parents=(P1, P2))))
    assert a == b


@pytest.mark.parametrize("name,parents", [("initializer", (P1,)), ("general_mutation", ()),
                                          ("intersection_crossover", (P1,))])
def test_arity_mismatch(name, parents):
    with pytest.raises(agents.ContextArityMismatch):
        agents.render_prompt(agents.SPEC_BY_NAME[name], ctx(parents=parents))


# -- envelopes -----------------------------------------------------------

def test_plain_envelope():
    r = agents.parse_envelope('{"dsl": "y[1] >= 1;", "idea": "open"}')
    assert (r.dsl, r.idea) == ("y[1] >= 1;", "open")


def test_fenced_envelope_with_chatter():
    text = 'Sure, here it is:\n```json\n{"dsl": "y[1] >= 1;", "idea": "open"}\n```\nHope this helps {not json}'
    r = agents.parse_envelope(text)
    assert r.dsl == "y[1] >= 1;" and r.raw == text


def test_envelope_skips_non_json_braces():
    r = agents.parse_envelope('set {1, 2} then {"dsl": "y[2] >= 1;", "idea": "x"}')
    assert r.dsl == "y[2] >= 1;"


@pytest.mark.parametrize("text", ["no json here", '{"idea": "only idea"}', '{"dsl": "  "}'])
def test_envelope_errors(text):
    with pytest.raises(agents.EnvelopeError):
        agents.parse_envelope(text)


def test_response_source_prefixes_idea():
    assert agents.AgentResponse("y[1] >= 1;", "open\n one").source() == "// idea: open one\ny[1] >= 1;"
    assert agents.AgentResponse("// idea: a\ny[1] >= 1;", "b").source().startswith("// idea: a")


# -- remote client -------------------------------------------------------

def chat(content):
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def remote(handler, monkeypatch, **cfg):
    monkeypatch.setenv("TEST_TOKEN", "secret")
    sleeps = []
    ep = agents.ChatEndpointConfig("https://chat.invalid/v1", "m", token_env="TEST_TOKEN", **cfg)
    agent = agents.RemoteAgent(ep, httpx.Client(transport=httpx.MockTransport(handler)), sleep=sleeps.append)
    return agent, sleeps


def test_429_then_success(monkeypatch):
    calls = []

    def handler(req):
        calls.append(req)
        if len(calls) == 1:
            return httpx.Response(429)
        return chat('{"dsl": "y[1] >= 1;", "idea": "open"}')

    agent, sleeps = remote(handler, monkeypatch)
    r = agent.respond(agents.SPEC_BY_NAME["initializer"], ctx())
    assert r.dsl == "y[1] >= 1;"
    assert len(calls) == 2 and sleeps == [1.0]
    req = calls[0]
    assert req.url.path == "/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer secret"
    body = json.loads(req.content)
    assert set(body) == {"model", "messages", "max_tokens", "temperature"}


def test_transport_retries_exhausted(monkeypatch):
    agent, sleeps = remote(lambda req: httpx.Response(503), monkeypatch)
    with pytest.raises(agents.TransportError):
        agent.complete([{"role": "user", "content": "hi"}])
    assert sleeps == [1.0, 2.0, 4.0]


def test_client_error_not_retried(monkeypatch):
    calls = []
    agent, _ = remote(lambda req: calls.append(1) or httpx.Response(401, text="nope"), monkeypatch)
    with pytest.raises(agents.TransportError, match="401"):
        agent.complete([])
    assert len(calls) == 1


def test_penalties_only_when_enabled(monkeypatch):
    seen = []
    agent, _ = remote(lambda req: seen.append(json.loads(req.content)) or chat("{}"), monkeypatch,
                      send_penalties=True)
    agent.complete([])
    assert seen[0]["frequency_penalty"] == 0.0 and seen[0]["presence_penalty"] == 0.0


def test_missing_token(monkeypatch):
    monkeypatch.delenv("NO_SUCH_TOKEN", raising=False)
    ep = agents.ChatEndpointConfig("https://chat.invalid", "m", token_env="NO_SUCH_TOKEN")
    agent = agents.RemoteAgent(ep, httpx.Client(transport=httpx.MockTransport(lambda r: chat("{}"))))
    with pytest.raises(agents.TransportError, match="NO_SUCH_TOKEN"):
        agent.complete([])


def test_transcript_redacts_token(monkeypatch):
    events = []

    class Log:
        def emit(self, kind, **kw):
            events.append((kind, kw))

    agent, _ = remote(lambda r: chat('{"dsl": "y[1] >= 1;"}'), monkeypatch)
    agent.transcript = Log()
    agent.complete([])
    assert events[0][1]["headers"]["Authorization"] == "<redacted>"
    assert "secret" not in json.dumps(events)


# -- mock agent ----------------------------------------------------------

def test_mock_first_initializer_is_builtin():
    agent = agents.MockAgent("tsp")
    r = agent.respond(agents.SPEC_BY_NAME["initializer"], ctx(problem_kind="tsp"), np.random.default_rng(0))
    fam = dsl.parse(r.source())
    assert fam.family_id == dsl.parse(builtin_cuts.builtin_cut_source("tsp")).family_id


def test_mock_corpus_exhausts():
    agent = agents.MockAgent("jssp")
    spec = agents.SPEC_BY_NAME["initializer"]
    ids = set()
    with pytest.raises(agents.CorpusExhausted):
        for _ in range(100):
            ids.add(dsl.parse(agent.respond(spec, ctx(), None).dsl).family_id)
    assert len(ids) == len(agent.corpus)


def test_mock_state_round_trip():
    a = agents.MockAgent("cwlp")
    spec = agents.SPEC_BY_NAME["initializer"]
    a.respond(spec, ctx(), None)
    b = agents.MockAgent("cwlp")
    b.restore(a.state())
    assert a.respond(spec, ctx(), None) == b.respond(spec, ctx(), None)


def test_identity_scale_is_hash_equal():
    tree = dsl.parse("sum(j in J: y[j]) >= 2;").ast
    assert dsl.canonical_hash(mock.apply_op(tree, {"op": "scale", "f": 1.0})) == dsl.canonical_hash(tree)


def test_mock_mutation_identity_table():
    table = {**mock.load_table(), "mutation": {"general_mutation": [{"op": "scale", "f": 1.0}]}}
    agent = agents.MockAgent("cwlp", table)
    r = agent.respond(agents.SPEC_BY_NAME["general_mutation"], ctx(parents=(P1,)), np.random.default_rng(3))
    assert dsl.parse(r.dsl).family_id == dsl.parse(P1.dsl).family_id


def test_mock_union_of_disjoint_rows():
    table = {**mock.load_table(), "crossover": {"intersection_crossover": ["union"]}}
    agent = agents.MockAgent("cwlp", table)
    r = agent.respond(agents.SPEC_BY_NAME["intersection_crossover"], ctx(parents=(P1, P2)),
                      np.random.default_rng(0))
    assert len(dsl.parse(r.dsl).ast.constraints) == 2


def test_mock_is_deterministic_per_rng():
    spec = agents.SPEC_BY_NAME["exploratory_mutation"]
    parent = agents.ParentCut(builtin_cuts.builtin_cut_source("rect"), "breaks", 10.0)
    outs = [agents.MockAgent("rect").respond(spec, ctx(parents=(parent,)), np.random.default_rng(11)).dsl
            for _ in range(2)]
    assert outs[0] == outs[1]


def test_table_is_versioned():
    assert isinstance(mock.TABLE_VERSION, int)
    table = mock.load_table()
    assert set(table["mutation"]) == {s.name for s in agents.specs_of_kind(MUTATION)}
    assert set(table["crossover"]) == {s.name for s in agents.specs_of_kind(CROSSOVER)}
