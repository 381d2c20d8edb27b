"""The two scenario pipelines: fixed stage graphs over gateway + contracts.

An all-cases run drafts ~20 questions, refines them to the 10 most
useful, writes expected answers, builds Bloom-tagged rubrics, and
packages everything as JSON. A some-or-none run first produces a correct
reference solution, drafts 10 diagnostic prompts, selects the 5 most
verdict-aligned, builds rubrics, and packages questions + rubrics. Each
stage's prompt embeds the previous stage's validated output inside
delimited sections; nothing else crosses stage boundaries.
"""

from __future__ import annotations

import enum
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Callable, Protocol

from . import prompts
from .audit import AuditLog
from .contracts import (
    ContractRegistry,
    FormatContract,
    StageFormatError,
    StageResult,
    run_with_regeneration,
)
from .domain import (
    PipelineConfig,
    ReflectionQuestion,
    Scenario,
    SubmissionBundle,
    ValidationError,
    format_timestamp,
    parse_timestamp,
    question_id_for,
    utc_now,
)
from .gateway import ClientRole, Gateway, GatewayError, PromptRequest

#: Stage graph for submissions that passed every test case.
ALL_CASES_STAGES: tuple[tuple[str, ClientRole], ...] = (
    ("generator_draft", ClientRole.GENERATOR),
    ("reviewer_refine", ClientRole.REVIEWER),
    ("generator_answers", ClientRole.GENERATOR),
    ("reviewer_rubric", ClientRole.REVIEWER),
    ("formatter_package", ClientRole.FORMATTER),
)

#: Stage graph for submissions that failed at least one test case.
SOME_OR_NONE_STAGES: tuple[tuple[str, ClientRole], ...] = (
    ("generator_reference", ClientRole.GENERATOR),
    ("generator_questions", ClientRole.GENERATOR),
    ("reviewer_select", ClientRole.REVIEWER),
    ("reviewer_rubric", ClientRole.REVIEWER),
    ("formatter_package", ClientRole.FORMATTER),
)


def stage_plan(scenario: Scenario) -> tuple[tuple[str, ClientRole], ...]:
    return ALL_CASES_STAGES if scenario is Scenario.ALL_CASES else SOME_OR_NONE_STAGES


class StageOutcome(enum.Enum):
    VALID = "Valid"
    FAILED = "Failed"


class RunStatus(enum.Enum):
    COMPLETED = "Completed"
    FAILED = "Failed"


@dataclass(frozen=True)
class StageRecord:
    stage_name: str
    role: ClientRole
    attempts: int
    outcome: StageOutcome
    duration_ms: int

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise ValidationError("attempts: must be >= 1")


@dataclass(frozen=True)
class QuestionPackage:
    """Completed output of one pipeline run, keyed by bundle hash."""

    scenario: Scenario
    questions: tuple[ReflectionQuestion, ...]
    reference_solution: str | None
    generated_at: datetime
    config_snapshot: PipelineConfig

    def __post_init__(self) -> None:
        cfg = self.config_snapshot
        if self.scenario is Scenario.ALL_CASES:
            if len(self.questions) != cfg.refined_question_count:
                raise ValidationError(
                    f"questions: expected {cfg.refined_question_count} for the all-cases "
                    f"flow, got {len(self.questions)}"
                )
            for q in self.questions:
                if not q.expected_answer:
                    raise ValidationError(f"questions[{q.id}]: expected_answer required")
            if self.reference_solution is not None:
                raise ValidationError("reference_solution: only present for some-or-none")
        else:
            if len(self.questions) != cfg.fail_selected_count:
                raise ValidationError(
                    f"questions: expected {cfg.fail_selected_count} for the some-or-none "
                    f"flow, got {len(self.questions)}"
                )
            for q in self.questions:
                if q.expected_answer is not None:
                    raise ValidationError(f"questions[{q.id}]: expected_answer not allowed")
            if not self.reference_solution or not self.reference_solution.strip():
                raise ValidationError("reference_solution: required for some-or-none")
        ids = [q.id for q in self.questions]
        if len(set(ids)) != len(ids):
            raise ValidationError("questions: duplicate question ids")

    def question_by_id(self, question_id: str) -> ReflectionQuestion:
        for q in self.questions:
            if q.id == question_id:
                return q
        raise KeyError(question_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario.to_json(),
            "questions": [q.to_dict() for q in self.questions],
            "reference_solution": self.reference_solution,
            "generated_at": format_timestamp(self.generated_at),
            "config_snapshot": self.config_snapshot.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "QuestionPackage":
        return cls(
            scenario=Scenario.from_json(data["scenario"]),
            questions=tuple(ReflectionQuestion.from_dict(q) for q in data["questions"]),
            reference_solution=data.get("reference_solution"),
            generated_at=parse_timestamp(data["generated_at"]),
            config_snapshot=PipelineConfig.from_dict(data["config_snapshot"]),
        )

    def student_view(self) -> dict[str, Any]:
        """The payload students may see: statements only.

        Rubric anchors, expected answers, and the reference solution never
        leave the server through this view.
        """
        return {
            "scenario": self.scenario.to_json(),
            "questions": [{"id": q.id, "statement": q.statement} for q in self.questions],
        }


@dataclass(frozen=True)
class PipelineRun:
    """Audit record of one pipeline execution."""

    run_id: str
    bundle_hash: str
    scenario: Scenario
    stages: tuple[StageRecord, ...]
    result: QuestionPackage | None
    status: RunStatus

    def __post_init__(self) -> None:
        if self.status is RunStatus.COMPLETED:
            if self.result is None:
                raise ValidationError("result: required for a completed run")
            expected = stage_plan(self.scenario)
            actual = tuple((s.stage_name, s.role) for s in self.stages)
            if actual != expected:
                raise ValidationError(
                    f"stages: completed {self.scenario.value} run must record "
                    f"{[name for name, _ in expected]}, got {[s.stage_name for s in self.stages]}"
                )


class PipelineError(Exception):
    """A pipeline run failed; carries the partial run for inspection."""

    def __init__(self, message: str, run: PipelineRun, retryable: bool):
        super().__init__(message)
        self.run = run
        self.retryable = retryable


class PackageStorage(Protocol):
    def load(self, bundle_hash: str) -> QuestionPackage | None: ...

    def save(self, bundle_hash: str, package: QuestionPackage) -> None: ...


class Pipeline:
    """Executes scenario runs against one gateway, contracts, and config."""

    def __init__(
        self,
        gateway: Gateway,
        contracts: ContractRegistry,
        config: PipelineConfig,
        personas: dict[ClientRole, str] | None = None,
        stage_timeout_s: float = 60.0,
        run_timeout_s: float = 240.0,
        clock: Callable[[], datetime] = utc_now,
    ):
        self.gateway = gateway
        self.contracts = contracts
        self.config = config
        self.personas = personas
        self.stage_timeout_s = stage_timeout_s
        self.run_timeout_s = run_timeout_s
        self.clock = clock
        self._flight_lock = threading.Lock()
        self._flights: dict[str, threading.Lock] = {}

    # -- public entry points ----------------------------------------------

    def run_all_cases(self, bundle: SubmissionBundle) -> QuestionPackage:
        if bundle.verdict.is_failure:
            raise ValidationError("run_all_cases: bundle verdict must be AllPassed")
        run = self.execute(bundle)
        assert run.result is not None
        return run.result

    def run_some_or_none(self, bundle: SubmissionBundle) -> QuestionPackage:
        if not bundle.verdict.is_failure:
            raise ValidationError("run_some_or_none: bundle verdict must be a failure kind")
        run = self.execute(bundle)
        assert run.result is not None
        return run.result

    def run_for_bundle(self, bundle: SubmissionBundle) -> QuestionPackage:
        if bundle.verdict.is_failure:
            return self.run_some_or_none(bundle)
        return self.run_all_cases(bundle)

    def get_or_run(self, bundle: SubmissionBundle, store: PackageStorage) -> QuestionPackage:
        """Cache-or-compute by content hash with single-flight semantics.

        Concurrent callers for one fresh hash share a single pipeline
        execution; the winner persists the package atomically.
        """
        cached = store.load(bundle.content_hash)
        if cached is not None:
            return cached
        with self._flight_lock:
            flight = self._flights.setdefault(bundle.content_hash, threading.Lock())
        with flight:
            cached = store.load(bundle.content_hash)
            if cached is not None:
                return cached
            package = self.run_for_bundle(bundle)
            store.save(bundle.content_hash, package)
            return package

    # -- execution ---------------------------------------------------------

    def execute(self, bundle: SubmissionBundle) -> PipelineRun:
        """Run the scenario pipeline, returning the full run record.

        Raises :class:`PipelineError` on stage failure; the partial run
        (with its StageRecords) rides on the exception.
        """
        run_id = uuid.uuid4().hex
        scenario = bundle.scenario
        records: list[StageRecord] = []
        deadline = time.monotonic() + self.run_timeout_s
        try:
            if scenario is Scenario.ALL_CASES:
                package = self._run_all_cases_stages(bundle, run_id, records, deadline)
            else:
                package = self._run_some_or_none_stages(bundle, run_id, records, deadline)
        except (StageFormatError, GatewayError) as exc:
            run = PipelineRun(
                run_id=run_id,
                bundle_hash=bundle.content_hash,
                scenario=scenario,
                stages=tuple(records),
                result=None,
                status=RunStatus.FAILED,
            )
            retryable = getattr(exc, "retryable", False)
            raise PipelineError(str(exc), run=run, retryable=retryable) from exc
        return PipelineRun(
            run_id=run_id,
            bundle_hash=bundle.content_hash,
            scenario=scenario,
            stages=tuple(records),
            result=package,
            status=RunStatus.COMPLETED,
        )

    def _run_all_cases_stages(
        self,
        bundle: SubmissionBundle,
        run_id: str,
        records: list[StageRecord],
        deadline: float,
    ) -> QuestionPackage:
        cfg = self.config
        contract = self.contracts["question_list"].bind(expected_count=cfg.draft_question_count)
        draft = self._stage(
            run_id, records, deadline, "generator_draft",
            prompts.draft_questions(bundle, cfg, contract, self.personas), contract,
        )

        contract = self.contracts["question_list"].bind(expected_count=cfg.refined_question_count)
        refined = self._stage(
            run_id, records, deadline, "reviewer_refine",
            prompts.refine_questions(bundle, draft, cfg, contract, self.personas), contract,
        )

        contract = self.contracts["expected_answers"].bind(expected_count=len(refined))
        pairs = self._stage(
            run_id, records, deadline, "generator_answers",
            prompts.expected_answers(bundle, refined, cfg, contract, self.personas), contract,
        )
        answers = [answer for _question, answer in pairs]

        contract = self.contracts["rubric"].bind(expected_questions=len(refined))
        rubrics = self._stage(
            run_id, records, deadline, "reviewer_rubric",
            prompts.build_rubric(bundle, refined, cfg, contract, answers=answers, personas=self.personas),
            contract,
        )

        contract = self.contracts["packaged_json"].bind(
            scenario=Scenario.ALL_CASES.value,
            expected_count=len(refined),
            allowed_statements=refined,
        )
        packaged = self._stage(
            run_id, records, deadline, "formatter_package",
            prompts.package_questions(
                refined, _render_rubrics(rubrics), cfg, contract,
                answers=answers, personas=self.personas,
            ),
            contract,
        )
        return self._assemble(bundle, Scenario.ALL_CASES, packaged, reference=None)

    def _run_some_or_none_stages(
        self,
        bundle: SubmissionBundle,
        run_id: str,
        records: list[StageRecord],
        deadline: float,
    ) -> QuestionPackage:
        cfg = self.config
        contract = self.contracts["reference_solution"]
        reference = self._stage(
            run_id, records, deadline, "generator_reference",
            prompts.reference_solution(bundle, cfg, contract, self.personas), contract,
        )["code"]

        contract = self.contracts["question_list"].bind(expected_count=cfg.fail_draft_count)
        draft = self._stage(
            run_id, records, deadline, "generator_questions",
            prompts.diagnostic_questions(bundle, reference, cfg, contract, self.personas),
            contract,
        )

        contract = self.contracts["question_list"].bind(expected_count=cfg.fail_selected_count)
        selected = self._stage(
            run_id, records, deadline, "reviewer_select",
            prompts.select_questions(bundle, draft, cfg, contract, self.personas), contract,
        )

        contract = self.contracts["rubric"].bind(expected_questions=len(selected))
        rubrics = self._stage(
            run_id, records, deadline, "reviewer_rubric",
            prompts.build_rubric(bundle, selected, cfg, contract, personas=self.personas),
            contract,
        )

        contract = self.contracts["packaged_json"].bind(
            scenario=Scenario.SOME_OR_NONE.value,
            expected_count=len(selected),
            allowed_statements=selected,
        )
        packaged = self._stage(
            run_id, records, deadline, "formatter_package",
            prompts.package_questions(
                selected, _render_rubrics(rubrics), cfg, contract, personas=self.personas,
            ),
            contract,
        )
        return self._assemble(bundle, Scenario.SOME_OR_NONE, packaged, reference=reference)

    def _assemble(
        self,
        bundle: SubmissionBundle,
        scenario: Scenario,
        packaged: list[dict[str, Any]],
        reference: str | None,
    ) -> QuestionPackage:
        questions = []
        for index, item in enumerate(packaged):
            questions.append(
                ReflectionQuestion(
                    id=question_id_for(bundle.content_hash, scenario, index, item["statement"]),
                    statement=item["statement"],
                    expected_answer=item["expected_answer"],
                    rubric=tuple(item["rubric"]),
                    scenario=scenario,
                )
            )
        return QuestionPackage(
            scenario=scenario,
            questions=tuple(questions),
            reference_solution=reference,
            generated_at=self.clock(),
            config_snapshot=self.config,
        )

    def _stage(
        self,
        run_id: str,
        records: list[StageRecord],
        run_deadline: float,
        stage_name: str,
        request: PromptRequest,
        contract: FormatContract,
    ) -> Any:
        budget = min(self.stage_timeout_s, run_deadline - time.monotonic())
        started = time.monotonic()
        try:
            result: StageResult = run_with_regeneration(
                self.gateway,
                request,
                contract,
                self.config,
                stage=stage_name,
                run_id=run_id,
                timeout_s=budget,
            )
        except (StageFormatError, GatewayError) as exc:
            duration_ms = int((time.monotonic() - started) * 1000)
            attempts = getattr(exc, "attempts", None) or getattr(exc, "attempts_made", 1)
            record = StageRecord(
                stage_name=stage_name,
                role=request.role,
                attempts=max(1, attempts),
                outcome=StageOutcome.FAILED,
                duration_ms=duration_ms,
            )
            records.append(record)
            self._log_stage(run_id, record, contract)
            raise
        duration_ms = int((time.monotonic() - started) * 1000)
        record = StageRecord(
            stage_name=stage_name,
            role=request.role,
            attempts=result.attempts,
            outcome=StageOutcome.VALID,
            duration_ms=duration_ms,
        )
        records.append(record)
        self._log_stage(run_id, record, contract)
        return result.parsed

    def _log_stage(self, run_id: str, record: StageRecord, contract: FormatContract) -> None:
        self.gateway.audit.append(
            {
                "event": "stage",
                "run_id": run_id,
                "stage": record.stage_name,
                "role": record.role.value,
                "contract": contract.name,
                "attempts": record.attempts,
                "outcome": record.outcome.value.lower(),
                "duration_ms": record.duration_ms,
            }
        )


def _render_rubrics(rubrics: list[list[Any]]) -> str:
    parts = []
    for i, criteria in enumerate(rubrics, start=1):
        parts.append(f"QUESTION {i}:")
        parts.append(prompts.render_rubric_text(criteria))
    return "\n".join(parts)
