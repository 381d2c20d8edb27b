"""Embedded single-node persistence.

Two append-only JSON-lines logs (session events, ratings) plus a
content-addressed package directory keyed by bundle hash. Appends are
fsynced by default, so a crash between any two operations leaves every
acknowledged event on disk; state is rebuilt by replay on startup.
Package files are written via temp-file-and-rename, so a partial package
is never visible.
"""

from __future__ import annotations

import enum
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Iterator

from .assessment import SummaryReport
from .domain import (
    AnswerEvaluation,
    QuestionRating,
    SubmissionBundle,
    ValidationError,
    Verdict,
    canonical_json,
    format_timestamp,
    parse_timestamp,
    pretty_json,
    utc_now,
)
from .pipelines import QuestionPackage


class Step(enum.Enum):
    """Workflow position; transitions are monotone, no skips, no regressions."""

    CREATED = "Created"
    ARTIFACTS_UPLOADED = "ArtifactsUploaded"
    CONFIGURED = "Configured"
    ANSWERING = "Answering"
    SUMMARIZED = "Summarized"

    @property
    def order(self) -> int:
        return _STEP_ORDER[self]


_STEP_ORDER = {
    Step.CREATED: 0,
    Step.ARTIFACTS_UPLOADED: 1,
    Step.CONFIGURED: 2,
    Step.ANSWERING: 3,
    Step.SUMMARIZED: 4,
}


@dataclass
class SessionState:
    """One student session; mutated only through SessionStore events."""

    session_id: str
    step: Step
    created_at: datetime
    updated_at: datetime
    problem_statement: str | None = None
    source_code: str | None = None
    source_filename: str | None = None
    bundle: SubmissionBundle | None = None
    package_ref: str | None = None
    answered: dict[str, AnswerEvaluation] = field(default_factory=dict)
    drafts: dict[str, str] = field(default_factory=dict)
    summary: SummaryReport | None = None
    summary_json: str | None = None


class StorageError(Exception):
    """The store could not read or write its files."""


def atomic_write_text(path: Path, text: str) -> None:
    """Write via temp file + rename so readers never see partial content."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class PackageStore:
    """Content-addressed question packages: one JSON file per bundle hash."""

    def __init__(self, root: str | os.PathLike[str]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, bundle_hash: str) -> Path:
        if not bundle_hash or "/" in bundle_hash or "." in bundle_hash:
            raise ValidationError(f"bundle_hash: malformed {bundle_hash!r}")
        return self.root / f"{bundle_hash}.json"

    def load(self, bundle_hash: str) -> QuestionPackage | None:
        path = self._path(bundle_hash)
        if not path.exists():
            return None
        try:
            data = json.loads(path.read_text("utf-8"))
            return QuestionPackage.from_dict(data)
        except (OSError, json.JSONDecodeError, KeyError, ValidationError) as exc:
            raise StorageError(f"package {bundle_hash}: unreadable: {exc}") from exc

    def save(self, bundle_hash: str, package: QuestionPackage) -> None:
        atomic_write_text(self._path(bundle_hash), pretty_json(package.to_dict()))

    def hashes(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))


def _append_jsonl(path: Path, record: dict[str, Any], durable: bool) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    line = json.dumps(record, ensure_ascii=False, sort_keys=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        if durable:
            fh.flush()
            os.fsync(fh.fileno())


def _iter_jsonl(path: Path) -> Iterator[dict[str, Any]]:
    if not path.exists():
        return
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                continue  # torn tail after a crash; everything earlier is intact


class SessionStore:
    """Sessions, ratings, and packages under one storage root.

    Mutations append an event first, then update the in-memory state, so
    replay after a crash reconstructs exactly the acknowledged steps.
    """

    def __init__(self, root: str | os.PathLike[str], durable: bool = True):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.events_path = self.root / "events.jsonl"
        self.ratings_path = self.root / "ratings.jsonl"
        self.packages = PackageStore(self.root / "packages")
        self._durable = durable
        self._lock = threading.Lock()
        self._sessions: dict[str, SessionState] = {}
        self._ratings: list[dict[str, Any]] = []
        self._replay()

    # -- replay -------------------------------------------------------------

    def _replay(self) -> None:
        for event in _iter_jsonl(self.events_path):
            try:
                self._apply(event)
            except (KeyError, ValidationError):
                continue  # skip records from incompatible versions
        self._ratings = list(_iter_jsonl(self.ratings_path))

    def _apply(self, event: dict[str, Any]) -> None:
        kind = event["event"]
        at = parse_timestamp(event["at"])
        if kind == "session_created":
            sid = event["session_id"]
            self._sessions[sid] = SessionState(
                session_id=sid, step=Step.CREATED, created_at=at, updated_at=at
            )
            return
        state = self._sessions[event["session_id"]]
        state.updated_at = at
        if kind == "artifacts_uploaded":
            state.problem_statement = event["problem_statement"]
            state.source_code = event["source_code"]
            state.source_filename = event["source_filename"]
            state.step = Step.ARTIFACTS_UPLOADED
        elif kind == "verdict_declared":
            # size limits were enforced at upload time; never re-check on replay
            state.bundle = SubmissionBundle.create(
                problem_statement=state.problem_statement or "",
                source_code=state.source_code or "",
                source_filename=state.source_filename or "",
                verdict=Verdict.from_json(event["verdict"]),
                max_chars=None,
            )
            state.step = Step.CONFIGURED
        elif kind == "package_ready":
            state.package_ref = event["package_ref"]
            state.step = Step.ANSWERING
        elif kind == "answer_draft":
            state.drafts[event["question_id"]] = event["answer"]
        elif kind == "answer_recorded":
            evaluation = AnswerEvaluation.from_dict(event["evaluation"])
            state.answered[evaluation.question_id] = evaluation
            state.drafts.pop(evaluation.question_id, None)
        elif kind == "summary_finalized":
            state.summary = SummaryReport.from_dict(event["report"])
            state.summary_json = event["report_json"]
            state.step = Step.SUMMARIZED
        else:
            raise KeyError(kind)

    # -- mutations ----------------------------------------------------------

    def _record(self, event: dict[str, Any]) -> None:
        event = dict(event)
        event["at"] = format_timestamp(utc_now())
        _append_jsonl(self.events_path, event, self._durable)
        self._apply(event)

    def create_session(self) -> SessionState:
        with self._lock:
            sid = uuid.uuid4().hex
            self._record({"event": "session_created", "session_id": sid})
            return self._sessions[sid]

    def record_artifacts(
        self, session_id: str, problem_statement: str, source_code: str, source_filename: str
    ) -> SessionState:
        with self._lock:
            self._record(
                {
                    "event": "artifacts_uploaded",
                    "session_id": session_id,
                    "problem_statement": problem_statement,
                    "source_code": source_code,
                    "source_filename": source_filename,
                }
            )
            return self._sessions[session_id]

    def record_verdict(self, session_id: str, verdict: Verdict) -> SessionState:
        with self._lock:
            self._record(
                {
                    "event": "verdict_declared",
                    "session_id": session_id,
                    "verdict": verdict.to_json(),
                }
            )
            return self._sessions[session_id]

    def record_package_ready(self, session_id: str, package_ref: str) -> SessionState:
        with self._lock:
            self._record(
                {
                    "event": "package_ready",
                    "session_id": session_id,
                    "package_ref": package_ref,
                }
            )
            return self._sessions[session_id]

    def record_answer_draft(self, session_id: str, question_id: str, answer: str) -> None:
        with self._lock:
            self._record(
                {
                    "event": "answer_draft",
                    "session_id": session_id,
                    "question_id": question_id,
                    "answer": answer,
                }
            )

    def record_answer(self, session_id: str, evaluation: AnswerEvaluation) -> SessionState:
        with self._lock:
            self._record(
                {
                    "event": "answer_recorded",
                    "session_id": session_id,
                    "question_id": evaluation.question_id,
                    "evaluation": evaluation.to_dict(),
                }
            )
            return self._sessions[session_id]

    def record_summary(self, session_id: str, report: SummaryReport) -> SessionState:
        with self._lock:
            self._record(
                {
                    "event": "summary_finalized",
                    "session_id": session_id,
                    "report": report.to_dict(),
                    "report_json": canonical_json(report.to_dict()),
                }
            )
            return self._sessions[session_id]

    def record_rating(self, rating: QuestionRating, session_id: str | None = None) -> None:
        row = rating.to_dict()
        row["session_id"] = session_id
        with self._lock:
            _append_jsonl(self.ratings_path, row, self._durable)
            self._ratings.append(row)

    # -- queries --------------------------------------------------------------

    def get_session(self, session_id: str) -> SessionState | None:
        with self._lock:
            return self._sessions.get(session_id)

    def session_ids(self) -> list[str]:
        with self._lock:
            return list(self._sessions)

    def ratings_for(self, question_id: str) -> list[dict[str, Any]]:
        with self._lock:
            return [r for r in self._ratings if r["question_id"] == question_id]

    def rating_mean(self, question_id: str) -> float | None:
        """Mean stars; the latest rating per session wins, anonymous ones all count."""
        rows = self.ratings_for(question_id)
        if not rows:
            return None
        by_session: dict[str, dict[str, Any]] = {}
        anonymous: list[dict[str, Any]] = []
        for row in rows:
            if row.get("session_id"):
                by_session[row["session_id"]] = row
            else:
                anonymous.append(row)
        effective = list(by_session.values()) + anonymous
        return sum(r["stars"] for r in effective) / len(effective)
