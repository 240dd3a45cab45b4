"""Run configuration: one JSON document validated against a versioned schema."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .evolution import GaConfig
from .problems import KINDS
from .solver import PROBE_CAP_SECONDS, SolveBudget

SCHEMA_VERSION = 1

_BUDGET = {
    "type": "object",
    "properties": {
        "wall_seconds": {"type": "number", "exclusiveMinimum": 0},
        "node_limit": {"type": ["integer", "null"], "minimum": 0},
        "gap_target": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
    },
    "required": ["wall_seconds"],
    "additionalProperties": False,
}

_SIZE = {"type": "object", "additionalProperties": {"type": "integer", "minimum": 1}}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "problem": {"enum": list(KINDS)},
        "generator": _SIZE,
        "eval_generator": _SIZE,
        "test_generator": _SIZE,
        "n_eval": {"type": "integer", "minimum": 1},
        "n_verify": {"type": "integer", "minimum": 1},
        "n_test": {"type": "integer", "minimum": 1},
        "n_spare": {"type": "integer", "minimum": 0},
        "budgets": {
            "type": "object",
            "properties": {"eval": _BUDGET, "preprocess_long": _BUDGET, "osp_long": _BUDGET,
                           "probe_cap": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
        "ga": {
            "type": "object",
            "properties": {
                "T": {"type": "integer", "minimum": 0},
                "mu": {"type": "integer", "minimum": 2},
                "P_c": {"type": "number", "minimum": 0, "maximum": 1},
                "P_m": {"type": "number", "minimum": 0, "maximum": 1},
                "r_e": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "max_retries": {"type": "integer", "minimum": 1},
                "stall_limit": {"type": "integer", "minimum": 1},
                "attempt_cap_factor": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "agent": {
            "type": "object",
            "properties": {
                "backend": {"enum": ["mock", "remote"]},
                "endpoint": {
                    "type": "object",
                    "properties": {
                        "base_url": {"type": "string"}, "model": {"type": "string"},
                        "token_env": {"type": "string"}, "max_tokens": {"type": "integer", "minimum": 1},
                        "temperature": {"type": "number", "minimum": 0},
                        "timeout": {"type": "number", "exclusiveMinimum": 0},
                        "transport_retries": {"type": "integer", "minimum": 0},
                        "backoff_seconds": {"type": "number", "minimum": 0},
                        "send_penalties": {"type": "boolean"},
                        "extra_body": {"type": "object"},
                    },
                    "required": ["base_url", "model"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "gap_cap": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["version", "problem"],
    "additionalProperties": False,
}

DEFAULT_SIZES = {"tsp": {"n": 8}, "mcnd": {"nodes": 6, "arcs": 12, "commodities": 3},
                 "cwlp": {"customers": 6, "warehouses": 5}, "jssp": {"jobs": 3, "machines": 3}, "rect": {"N": 3}}

DEFAULTS = {
    "n_eval": 10, "n_verify": 2, "n_test": 10, "n_spare": 3,
    "budgets": {"eval": {"wall_seconds": 5.0}, "preprocess_long": {"wall_seconds": 120.0},
                "osp_long": {"wall_seconds": 300.0}, "probe_cap": PROBE_CAP_SECONDS},
    "ga": {"T": 20, "mu": 8, "P_c": 0.7, "P_m": 0.3, "r_e": 0.2, "max_retries": 3},
    "agent": {"backend": "mock"},
    "seed": 42,
    "output_dir": "runs/default",
    "workers": 1,
    "gap_cap": 1.0,
}

# named random sub-streams derived from the single run seed
STREAMS = {"generator": 1, "ga": 2, "agents": 3}


class ConfigError(ValueError):
    pass


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    raw: dict

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        try:
            jsonschema.validate(obj, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
        merged = _merge(DEFAULTS, obj)
        merged.setdefault("generator", DEFAULT_SIZES[merged["problem"]])
        cfg = cls(merged)
        try:
            cfg.ga()
            cfg.eval_budget()
            cfg.long_budget()
            cfg.osp_budget()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(obj)

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def problem(self) -> str:
        return self.raw["problem"]

    def ga(self) -> GaConfig:
        return GaConfig(seed=self.stream_seed("ga"), **self.raw["ga"])

    def _budget(self, key) -> SolveBudget:
        return SolveBudget.from_json(self.raw["budgets"][key])

    def eval_budget(self):
        return self._budget("eval")

    def long_budget(self):
        return self._budget("preprocess_long")

    def osp_budget(self):
        return self._budget("osp_long")

    @property
    def probe_cap(self) -> float:
        return float(self.raw["budgets"]["probe_cap"])

    def stream_seed(self, name: str) -> int:
        ss = np.random.SeedSequence([self.raw["seed"], STREAMS[name]])
        return int(ss.generate_state(1)[0])

    def instance_seeds(self, role: str, count: int) -> list:
        """Seeds for one instance pool (``eval``, ``verify``, ``spare`` or ``test``); pools never overlap."""
        salt = {"eval": 11, "verify": 12, "spare": 13, "test": 14}[role]
        ss = np.random.SeedSequence([self.raw["seed"], STREAMS["generator"], salt])
        return [int(x) for x in ss.generate_state(count)] if count else []

    def size_for(self, role: str) -> dict:
        key = {"eval": "eval_generator", "test": "test_generator"}.get(role)
        return self.raw.get(key) or self.raw["generator"]

    def to_json(self) -> dict:
        return copy.deepcopy(self.raw)
