"""Shared domain types, their validation rules, and canonical JSON forms.

Every type here is an immutable value object: safe to share between
threads and to use as cache keys. Constructors enforce the invariants;
out-of-range values are rejected, never clamped.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from typing import Any

#: Default upload bound for problem statements and source code (64 KiB).
DEFAULT_MAX_UPLOAD_CHARS = 64 * 1024

#: Hard cap on words in a generated question short title.
MAX_TITLE_WORDS = 5


class ValidationError(ValueError):
    """A domain value violates its invariants. Message names the field."""


class Verdict(enum.Enum):
    """Declared online-judge outcome for a submission.

    AllPassed selects the all-cases reflection flow; every other kind
    selects the some-or-none (diagnostic) flow.
    """

    ALL_PASSED = "AllPassed"
    WRONG_ANSWER = "WrongAnswer"
    TIME_LIMIT_EXCEEDED = "TimeLimitExceeded"
    RUNTIME_ERROR = "RuntimeError"
    COMPILE_ERROR = "CompileError"

    @property
    def is_failure(self) -> bool:
        return self is not Verdict.ALL_PASSED

    @classmethod
    def from_json(cls, value: str) -> "Verdict":
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(f"verdict: unknown kind {value!r}") from None

    def to_json(self) -> str:
        return self.value


class Scenario(enum.Enum):
    """Which reflection flow a question package belongs to."""

    ALL_CASES = "AllCases"
    SOME_OR_NONE = "SomeOrNone"

    @classmethod
    def for_verdict(cls, verdict: Verdict) -> "Scenario":
        return cls.SOME_OR_NONE if verdict.is_failure else cls.ALL_CASES

    @classmethod
    def from_json(cls, value: str) -> "Scenario":
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(f"scenario: unknown value {value!r}") from None

    def to_json(self) -> str:
        return self.value


class BloomLevel(enum.IntEnum):
    """Cognitive levels used to stratify questions, lowest to highest.

    The order is total: Remember < Understand < Apply < Analyze < Integrate.
    """

    REMEMBER = 1
    UNDERSTAND = 2
    APPLY = 3
    ANALYZE = 4
    INTEGRATE = 5

    @property
    def label(self) -> str:
        return self.name.title()

    @classmethod
    def from_json(cls, value: str) -> "BloomLevel":
        try:
            return cls[value.upper()]
        except KeyError:
            raise ValidationError(f"bloom_level: unknown level {value!r}") from None

    def to_json(self) -> str:
        return self.label


def word_count(text: str) -> int:
    """Count maximal whitespace-delimited tokens in *text*."""
    return len(text.split())


def normalize_upload_text(text: str) -> str:
    """Normalize uploaded text for storage and hashing.

    Line endings become LF, trailing whitespace is stripped per line, and
    trailing blank lines are dropped. Interior content is kept verbatim.
    """
    unified = text.replace("\r\n", "\n").replace("\r", "\n")
    lines = [line.rstrip() for line in unified.split("\n")]
    return "\n".join(lines).rstrip("\n")


def compute_content_hash(problem_statement: str, source_code: str, verdict: Verdict) -> str:
    """Stable digest keying a (problem, code, verdict kind) triple.

    Inputs are normalized with :func:`normalize_upload_text` first, so
    uploads that differ only in line endings or trailing whitespace share
    a digest. Raises :class:`ValidationError` naming any empty field.
    """
    problem = normalize_upload_text(problem_statement)
    code = normalize_upload_text(source_code)
    if not problem:
        raise ValidationError("problem_statement: must be non-empty")
    if not code:
        raise ValidationError("source_code: must be non-empty")
    payload = json.dumps([problem, code, verdict.value], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SubmissionBundle:
    """Problem statement + source code + declared verdict.

    The unit that keys a reflection session. Build instances through
    :meth:`create`, which normalizes the texts and computes the hash.
    """

    problem_statement: str
    source_code: str
    source_filename: str
    verdict: Verdict
    content_hash: str

    @classmethod
    def create(
        cls,
        problem_statement: str,
        source_code: str,
        source_filename: str,
        verdict: Verdict,
        max_chars: int | None = DEFAULT_MAX_UPLOAD_CHARS,
    ) -> "SubmissionBundle":
        """Normalize, validate, and hash. ``max_chars=None`` skips the size
        check (replay of already-accepted uploads)."""
        if max_chars is not None:
            if len(problem_statement) > max_chars:
                raise ValidationError(
                    f"problem_statement: exceeds the {max_chars}-character limit"
                )
            if len(source_code) > max_chars:
                raise ValidationError(
                    f"source_code: exceeds the {max_chars}-character limit"
                )
        problem = normalize_upload_text(problem_statement)
        code = normalize_upload_text(source_code)
        digest = compute_content_hash(problem, code, verdict)
        return cls(
            problem_statement=problem,
            source_code=code,
            source_filename=source_filename,
            verdict=verdict,
            content_hash=digest,
        )

    def __post_init__(self) -> None:
        if not self.problem_statement.strip():
            raise ValidationError("problem_statement: must be non-empty")
        if not self.source_code.strip():
            raise ValidationError("source_code: must be non-empty")
        expected = compute_content_hash(self.problem_statement, self.source_code, self.verdict)
        if self.content_hash != expected:
            raise ValidationError("content_hash: does not match bundle contents")

    @property
    def scenario(self) -> Scenario:
        return Scenario.for_verdict(self.verdict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem_statement": self.problem_statement,
            "source_code": self.source_code,
            "source_filename": self.source_filename,
            "verdict": self.verdict.to_json(),
            "content_hash": self.content_hash,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SubmissionBundle":
        return cls(
            problem_statement=data["problem_statement"],
            source_code=data["source_code"],
            source_filename=data["source_filename"],
            verdict=Verdict.from_json(data["verdict"]),
            content_hash=data["content_hash"],
        )


@dataclass(frozen=True)
class RubricCriterion:
    """One Bloom-tagged scoring criterion with 0-3 descriptive anchors."""

    description: str
    bloom_level: BloomLevel
    score_anchors: tuple[str, str, str, str]  # anchors for scores 0..3

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValidationError("description: must be non-empty")
        if len(self.score_anchors) != 4:
            raise ValidationError("score_anchors: must have exactly the four keys 0..3")
        for score, anchor in enumerate(self.score_anchors):
            if not anchor.strip():
                raise ValidationError(f"score_anchors[{score}]: must be non-empty")

    def anchor_for(self, score: int) -> str:
        return self.score_anchors[score]

    def to_dict(self) -> dict[str, Any]:
        return {
            "description": self.description,
            "bloom_level": self.bloom_level.to_json(),
            "score_anchors": {str(i): a for i, a in enumerate(self.score_anchors)},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RubricCriterion":
        anchors = data["score_anchors"]
        if set(anchors) != {"0", "1", "2", "3"}:
            raise ValidationError("score_anchors: must have exactly the four keys 0..3")
        return cls(
            description=data["description"],
            bloom_level=BloomLevel.from_json(data["bloom_level"]),
            score_anchors=tuple(anchors[str(i)] for i in range(4)),
        )


def question_id_for(bundle_hash: str, scenario: Scenario, index: int, statement: str) -> str:
    """Content-derived question id: stable across reruns of the same bundle."""
    payload = f"{bundle_hash}:{scenario.value}:{index}:{statement}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ReflectionQuestion:
    """One generated open-ended prompt with its rubric.

    expected_answer is present only in the all-cases flow; short_title is
    filled at summary time if at all.
    """

    id: str
    statement: str
    rubric: tuple[RubricCriterion, ...]
    scenario: Scenario
    expected_answer: str | None = None
    short_title: str | None = None

    def __post_init__(self) -> None:
        if not self.statement.strip():
            raise ValidationError("statement: must be non-empty")
        if not self.rubric:
            raise ValidationError("rubric: must be non-empty")
        if self.short_title is not None and word_count(self.short_title) > MAX_TITLE_WORDS:
            raise ValidationError(f"short_title: at most {MAX_TITLE_WORDS} words")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "statement": self.statement,
            "expected_answer": self.expected_answer,
            "rubric": [c.to_dict() for c in self.rubric],
            "scenario": self.scenario.to_json(),
            "short_title": self.short_title,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ReflectionQuestion":
        return cls(
            id=data["id"],
            statement=data["statement"],
            expected_answer=data.get("expected_answer"),
            rubric=tuple(RubricCriterion.from_dict(c) for c in data["rubric"]),
            scenario=Scenario.from_json(data["scenario"]),
            short_title=data.get("short_title"),
        )


@dataclass(frozen=True)
class AnswerEvaluation:
    """Numeric 0-3 score plus a word-bounded hint for one student response."""

    question_id: str
    student_answer: str
    score: int
    hint: str
    hint_word_limit: int

    def __post_init__(self) -> None:
        if self.hint_word_limit < 1:
            raise ValidationError("hint_word_limit: must be positive")
        if not 0 <= self.score <= 3:
            raise ValidationError(f"score: {self.score} outside [0, 3]")
        if word_count(self.hint) > self.hint_word_limit:
            raise ValidationError(
                f"hint: {word_count(self.hint)} words exceeds limit {self.hint_word_limit}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "student_answer": self.student_answer,
            "score": self.score,
            "hint": self.hint,
            "hint_word_limit": self.hint_word_limit,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AnswerEvaluation":
        return cls(
            question_id=data["question_id"],
            student_answer=data["student_answer"],
            score=data["score"],
            hint=data["hint"],
            hint_word_limit=data["hint_word_limit"],
        )


@dataclass(frozen=True)
class QuestionRating:
    """One 1-5 star helpfulness rating for a question + its feedback."""

    question_id: str
    stars: int
    rated_at: datetime

    def __post_init__(self) -> None:
        if not 1 <= self.stars <= 5:
            raise ValidationError(f"stars: {self.stars} outside [1, 5]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "stars": self.stars,
            "rated_at": format_timestamp(self.rated_at),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "QuestionRating":
        return cls(
            question_id=data["question_id"],
            stars=data["stars"],
            rated_at=parse_timestamp(data["rated_at"]),
        )


@dataclass(frozen=True)
class PipelineConfig:
    """Tunable counts, bounds, and sampling policy for the question pipelines.

    Defaults follow the published workflow: ~20 drafts refined to the 10
    most useful in the all-cases flow, 10 drafts cut to 5 verdict-aligned
    questions in the failure flow, 0-3 scoring, 20- and 50-word hint
    bounds, and low temperature for reproducible outputs.
    """

    draft_question_count: int = 20
    refined_question_count: int = 10
    fail_draft_count: int = 10
    fail_selected_count: int = 5
    hint_word_limit_feedback: int = 20
    hint_word_limit_workflow: int = 50
    title_word_limit: int = 5
    temperature: float = 0.2
    max_regeneration_attempts: int = 2
    reference_solution_language: str = "Python"

    def __post_init__(self) -> None:
        for name in (
            "draft_question_count",
            "refined_question_count",
            "fail_draft_count",
            "fail_selected_count",
            "hint_word_limit_feedback",
            "hint_word_limit_workflow",
            "title_word_limit",
            "max_regeneration_attempts",
        ):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name}: must be positive")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValidationError("temperature: must be within [0, 1]")
        if self.refined_question_count > self.draft_question_count:
            raise ValidationError(
                "refined_question_count: must not exceed draft_question_count"
            )
        if self.fail_selected_count > self.fail_draft_count:
            raise ValidationError("fail_selected_count: must not exceed fail_draft_count")

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"pipeline config: unknown fields {sorted(unknown)}")
        return cls(**data)


def format_timestamp(ts: datetime) -> str:
    """Canonical timestamp form: UTC ISO-8601 with microseconds."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat(timespec="microseconds")


def parse_timestamp(value: str) -> datetime:
    return datetime.fromisoformat(value)


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


#: Deterministic instant used when a run must be reproducible byte-for-byte.
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def canonical_json(data: Any) -> str:
    """Compact, key-sorted JSON; the byte-stable wire form."""
    return json.dumps(data, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def pretty_json(data: Any) -> str:
    """Key-sorted, indented JSON with a trailing newline; the file form."""
    return json.dumps(data, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


_TOKEN_RE = re.compile(r"\S+")


def contains_long_token_run(candidate: str, source: str, run_length: int = 10) -> bool:
    """True if *candidate* contains >= run_length consecutive tokens of *source*.

    Token runs are compared after collapsing whitespace, so reflowed text
    still counts as leakage. Used to keep reference solutions out of
    student-facing hints and summaries.
    """
    tokens = _TOKEN_RE.findall(source)
    if len(tokens) < run_length:
        return False
    haystack = " ".join(_TOKEN_RE.findall(candidate))
    for start in range(len(tokens) - run_length + 1):
        needle = " ".join(tokens[start : start + run_length])
        if needle in haystack:
            return True
    return False
