"""Append-only JSONL event log shared by verification, evolution and the CLI."""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path


class EventLog:
    """Writes one JSON object per line; ``path=None`` keeps events in memory only."""

    def __init__(self, path=None, clock=time.time):
        self.path = Path(path) if path is not None else None
        self.events: list[dict] = []
        self._lock = threading.Lock()
        self._clock = clock
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def emit(self, kind: str, **fields) -> dict:
        rec = {"event": kind, **fields}
        with self._lock:
            self.events.append(rec)
            if self.path is not None:
                # timestamps go to disk only so in-memory events stay comparable across runs
                line = json.dumps({"ts": round(self._clock(), 3), **rec}, sort_keys=True, default=str)
                with open(self.path, "a") as fh:
                    fh.write(line + "\n")
        return rec

    def of_kind(self, kind: str) -> list:
        return [e for e in self.events if e["event"] == kind]


def read_events(path) -> list:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(json.loads(line))
    return out
