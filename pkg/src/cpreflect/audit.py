"""Append-only JSON-lines audit log shared by the gateway and pipelines.

Three record kinds flow through one log:

* ``completion`` — one per provider call, request and response verbatim;
* ``validation`` — one per format-contract check, with its outcome;
* ``stage``      — one per finished pipeline stage, with attempt count
  and duration (the unit the batch audit report aggregates).
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Any, Iterator

from .domain import format_timestamp, utc_now


class AuditLog:
    """Thread-safe append-only JSON-lines sink.

    With a path, records are appended (and fsynced when ``durable``) so a
    crash never loses an acknowledged record; without one, records are
    held in memory, which is what most tests want.
    """

    def __init__(self, path: str | os.PathLike[str] | None = None, durable: bool = True):
        self._path = Path(path) if path is not None else None
        self._durable = durable
        self._lock = threading.Lock()
        self._records: list[dict[str, Any]] = []
        if self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            if self._path.exists():
                self._records = list(_read_jsonl(self._path))

    @property
    def path(self) -> Path | None:
        return self._path

    def append(self, record: dict[str, Any]) -> None:
        row = dict(record)
        row.setdefault("ts", format_timestamp(utc_now()))
        line = json.dumps(row, ensure_ascii=False, sort_keys=True)
        with self._lock:
            self._records.append(row)
            if self._path is not None:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
                    if self._durable:
                        fh.flush()
                        os.fsync(fh.fileno())

    def records(self, event: str | None = None) -> list[dict[str, Any]]:
        with self._lock:
            rows = list(self._records)
        if event is None:
            return rows
        return [r for r in rows if r.get("event") == event]

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)


def _read_jsonl(path: Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                continue  # torn tail line after a crash; replay keeps going


def stage_sequence(log: AuditLog, run_id: str) -> list[tuple[str, str]]:
    """(stage, role) pairs for one pipeline run, in execution order."""
    return [
        (r["stage"], r["role"])
        for r in log.records("stage")
        if r.get("run_id") == run_id
    ]
