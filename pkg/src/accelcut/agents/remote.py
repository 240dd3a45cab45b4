"""Chat-completions client and lenient response-envelope parsing."""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field

import httpx

log = logging.getLogger(__name__)


class TransportError(Exception):
    """Network or HTTP failure; retried by the client, never charged to the agent."""


class EnvelopeError(ValueError):
    """The reply does not contain a usable ``{"dsl", "idea"}`` object (a code-check failure)."""


@dataclass(frozen=True)
class AgentResponse:
    dsl: str
    idea: str
    raw: str = ""

    def source(self) -> str:
        """DSL text with the idea attached as a leading comment (unless it already has one)."""
        if self.dsl.lstrip().startswith("// idea:") or not self.idea:
            return self.dsl
        idea = " ".join(self.idea.split())
        return f"// idea: {idea}\n{self.dsl}"


_FENCE_RE = re.compile(r"```[A-Za-z0-9_-]*\s*\n(.*?)```", re.S)


def _first_object(text: str):
    """First balanced ``{...}`` that decodes as JSON, scanning left to right."""
    dec = json.JSONDecoder()
    for m in re.finditer(r"\{", text):
        try:
            obj, _ = dec.raw_decode(text, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def parse_envelope(text: str, raw: str | None = None) -> AgentResponse:
    candidates = [m.group(1) for m in _FENCE_RE.finditer(text)] + [text]
    for cand in candidates:
        obj = _first_object(cand)
        if obj is None:
            continue
        dsl = obj.get("dsl", obj.get("code"))
        idea = obj.get("idea", "")
        if isinstance(dsl, str) and dsl.strip():
            return AgentResponse(dsl, str(idea), raw if raw is not None else text)
    raise EnvelopeError('reply must contain a JSON object {"dsl": "...", "idea": "..."} with a nonempty "dsl"')


@dataclass(frozen=True)
class ChatEndpointConfig:
    base_url: str
    model: str
    token_env: str = "ACCELCUT_API_TOKEN"
    max_tokens: int = 10000
    temperature: float = 1.0
    timeout: float = 120.0
    transport_retries: int = 3
    backoff_seconds: float = 1.0
    send_penalties: bool = False
    extra_body: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be > 0")

    @classmethod
    def from_json(cls, obj) -> "ChatEndpointConfig":
        return cls(**obj)


def _redact(headers: dict) -> dict:
    return {k: ("<redacted>" if k.lower() == "authorization" else v) for k, v in headers.items()}


class RemoteAgent:
    """POSTs ``{base}/chat/completions``; 429/5xx and network errors are retried with exponential backoff."""

    def __init__(self, cfg: ChatEndpointConfig, client: httpx.Client | None = None, sleep=time.sleep,
                 transcript=None):
        self.cfg = cfg
        self.client = client or httpx.Client(timeout=cfg.timeout)
        self.sleep = sleep
        self.transcript = transcript  # EventLog or None

    def _headers(self):
        token = os.environ.get(self.cfg.token_env)
        if token is None:
            raise TransportError(f"environment variable {self.cfg.token_env} is not set")
        return {"Authorization": f"Bearer {token}", "Content-Type": "application/json"}

    def body(self, messages) -> dict:
        body = {"model": self.cfg.model, "messages": messages, "max_tokens": self.cfg.max_tokens,
                "temperature": self.cfg.temperature}
        if self.cfg.send_penalties:
            body["frequency_penalty"] = 0.0
            body["presence_penalty"] = 0.0
        body.update(self.cfg.extra_body)
        return body

    def complete(self, messages) -> str:
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        headers = self._headers()
        body = self.body(messages)
        last = None
        for attempt in range(self.cfg.transport_retries + 1):
            if attempt:
                self.sleep(self.cfg.backoff_seconds * 2 ** (attempt - 1))
            try:
                resp = self.client.post(url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last = TransportError(f"request failed: {exc}")
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise EnvelopeError(f"malformed chat response: {exc}") from exc
            if self.transcript is not None:
                self.transcript.emit("chat", url=url, headers=_redact(headers), request=body, response=content)
            return content or ""
        raise last

    def invoke(self, messages) -> AgentResponse:
        text = self.complete(messages)
        return parse_envelope(text)

    def respond(self, spec, ctx, rng=None) -> AgentResponse:
        from .prompts import render_prompt

        return self.invoke(render_prompt(spec, ctx))
