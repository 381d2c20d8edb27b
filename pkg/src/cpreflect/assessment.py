"""Answer scoring and end-of-session summaries.

Scoring is holistic: the grading client sees the rubric as guidance and
returns one 0-3 score plus a bounded hint. Out-of-range scores and
over-long hints are contract mismatches and trigger regeneration; they
are never clamped. Summary titles come from the summary client, but the
HTML table is assembled locally from validated rows so user-originated
text is always escaped.
"""

from __future__ import annotations

import html
import time
from dataclasses import dataclass
from typing import Any

from . import prompts
from .contracts import ContractRegistry, StageFormatError, run_with_regeneration
from .domain import (
    AnswerEvaluation,
    PipelineConfig,
    ReflectionQuestion,
    Scenario,
    ValidationError,
)
from .gateway import ClientRole, Gateway, GatewayError

#: Default server-side cap on a single free-text answer.
DEFAULT_MAX_ANSWER_CHARS = 8192


@dataclass(frozen=True)
class SummaryRow:
    question_title: str
    score: int
    feedback: str


@dataclass(frozen=True)
class SummaryReport:
    """One row per answered question, in answer order, plus the HTML table."""

    rows: tuple[SummaryRow, ...]
    html: str
    session_id: str

    def __post_init__(self) -> None:
        if not self.rows:
            raise ValidationError("rows: must be non-empty")
        if self.html.count("<table>") != 1:
            raise ValidationError("html: must contain exactly one table")

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows": [
                {
                    "question_title": r.question_title,
                    "score": r.score,
                    "feedback": r.feedback,
                }
                for r in self.rows
            ],
            "html": self.html,
            "session_id": self.session_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SummaryReport":
        return cls(
            rows=tuple(
                SummaryRow(r["question_title"], r["score"], r["feedback"])
                for r in data["rows"]
            ),
            html=data["html"],
            session_id=data["session_id"],
        )


def render_summary_html(rows: list[SummaryRow]) -> str:
    """Minimal table markup; every cell value is HTML-escaped."""
    body = "\n".join(
        "<tr><td>{title}</td><td>{score}</td><td>{feedback}</td></tr>".format(
            title=html.escape(row.question_title, quote=True),
            score=row.score,
            feedback=html.escape(row.feedback, quote=True),
        )
        for row in rows
    )
    return (
        "<table>\n"
        "<thead><tr><th>Question Title</th><th>Score</th><th>Feedback</th></tr></thead>\n"
        f"<tbody>\n{body}\n</tbody>\n"
        "</table>"
    )


class Assessor:
    """Grades free-text answers and compiles session summaries."""

    def __init__(
        self,
        gateway: Gateway,
        contracts: ContractRegistry,
        config: PipelineConfig,
        personas: dict[ClientRole, str] | None = None,
        stage_timeout_s: float = 60.0,
        max_answer_chars: int = DEFAULT_MAX_ANSWER_CHARS,
    ):
        self.gateway = gateway
        self.contracts = contracts
        self.config = config
        self.personas = personas
        self.stage_timeout_s = stage_timeout_s
        self.max_answer_chars = max_answer_chars

    def evaluate_answer(
        self,
        question: ReflectionQuestion,
        answer: str,
        bundle: Any,
        reference_solution: str | None = None,
        run_id: str | None = None,
    ) -> AnswerEvaluation:
        """Score one answer against its question's rubric.

        The applied hint bound depends on the scenario: the tighter
        feedback limit for all-cases questions, the looser workflow limit
        for diagnostic ones. The hint may never leak the reference
        solution; a leaking output is regenerated like any mismatch.
        """
        if len(answer) > self.max_answer_chars:
            raise ValidationError(
                f"answer: exceeds the {self.max_answer_chars}-character limit"
            )
        if question.scenario is Scenario.ALL_CASES:
            limit = self.config.hint_word_limit_feedback
        else:
            limit = self.config.hint_word_limit_workflow
        constraints: dict[str, Any] = {"word_limit": limit}
        if reference_solution:
            constraints["forbidden_text"] = reference_solution
        contract = self.contracts["feedback"].bind(**constraints)
        request = prompts.grade_answer(
            bundle,
            question.statement,
            list(question.rubric),
            answer,
            self.config,
            contract,
            expected_answer=question.expected_answer,
            personas=self.personas,
        )
        parsed = self._graded_stage("feedback", request, contract, run_id)
        return AnswerEvaluation(
            question_id=question.id,
            student_answer=answer,
            score=parsed["score"],
            hint=parsed["hint"],
            hint_word_limit=limit,
        )

    def build_summary(
        self,
        evaluations: list[tuple[ReflectionQuestion, AnswerEvaluation]],
        session_id: str,
        reference_solution: str | None = None,
        run_id: str | None = None,
    ) -> SummaryReport:
        """Title each answered question and build the summary table.

        Scores and feedback pass through byte-for-byte; only the titles
        are generated. Rows keep answer order.
        """
        if not evaluations:
            raise ValidationError("evaluations: must be non-empty")
        answered = [
            {"statement": q.statement, "score": e.score, "feedback": e.hint}
            for q, e in evaluations
        ]
        constraints: dict[str, Any] = {
            "title_word_limit": self.config.title_word_limit,
            "expected_rows": [{"score": e.score, "feedback": e.hint} for _q, e in evaluations],
        }
        if reference_solution:
            constraints["forbidden_text"] = reference_solution
        contract = self.contracts["summary"].bind(**constraints)
        request = prompts.summarize_session(answered, self.config, contract, self.personas)
        parsed = self._graded_stage("summary_titles", request, contract, run_id)
        rows = [
            SummaryRow(question_title=row["title"], score=e.score, feedback=e.hint)
            for row, (_q, e) in zip(parsed, evaluations)
        ]
        return SummaryReport(rows=tuple(rows), html=render_summary_html(rows), session_id=session_id)

    def _graded_stage(self, stage: str, request: Any, contract: Any, run_id: str | None) -> Any:
        started = time.monotonic()
        try:
            result = run_with_regeneration(
                self.gateway,
                request,
                contract,
                self.config,
                stage=stage,
                run_id=run_id,
                timeout_s=self.stage_timeout_s,
            )
        except (StageFormatError, GatewayError) as exc:
            attempts = getattr(exc, "attempts", None) or getattr(exc, "attempts_made", 1)
            self._log_stage(run_id, stage, request, contract, max(1, attempts), "failed", started)
            raise
        self._log_stage(run_id, stage, request, contract, result.attempts, "valid", started)
        return result.parsed

    def _log_stage(
        self,
        run_id: str | None,
        stage: str,
        request: Any,
        contract: Any,
        attempts: int,
        outcome: str,
        started: float,
    ) -> None:
        self.gateway.audit.append(
            {
                "event": "stage",
                "run_id": run_id,
                "stage": stage,
                "role": request.role.value,
                "contract": contract.name,
                "attempts": attempts,
                "outcome": outcome,
                "duration_ms": int((time.monotonic() - started) * 1000),
            }
        )
