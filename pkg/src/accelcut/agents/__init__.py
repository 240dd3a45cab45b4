"""Agent library: one initializer, three mutation and four crossover agents over two backends."""

from .mock import CorpusExhausted, MockAgent, build_corpus, load_table  # noqa: F401
from .prompts import (ARITY, CROSSOVER, INITIALIZER, MUTATION, SPEC_BY_NAME, SPECS,  # noqa: F401
                      AgentSpec, ContextArityMismatch, ParentCut, PromptContext, render_prompt,
                      specs_of_kind)
from .remote import (AgentResponse, ChatEndpointConfig, EnvelopeError, RemoteAgent,  # noqa: F401
                     TransportError, parse_envelope)
