"""The five-step session workflow service and its HTTP API.

State machine: Created -> ArtifactsUploaded -> Configured -> Answering ->
Summarized, monotone with no skips. Declaring a verdict triggers (or
reuses, by content hash) a pipeline run; a pipeline failure leaves the
session at Configured with a retriable error. Student-facing payloads
never carry rubric anchors, expected answers, or reference solutions —
those exist only behind the bearer-gated instructor endpoint.
"""

from __future__ import annotations

import argparse
import threading
from typing import Any

from fastapi import Depends, FastAPI, Request, UploadFile
from fastapi.responses import JSONResponse, Response

from .assessment import Assessor, SummaryReport
from .config import AppConfig, Runtime, build_runtime, load_app_config
from .contracts import StageFormatError
from .domain import (
    QuestionRating,
    ReflectionQuestion,
    ValidationError,
    Verdict,
    utc_now,
)
from .gateway import GatewayError
from .pipelines import Pipeline, PipelineError, QuestionPackage
from .store import SessionState, SessionStore, Step, StorageError


class ServiceError(Exception):
    http_status = 500
    retryable = False


class NotFoundError(ServiceError):
    http_status = 404


class StateError(ServiceError):
    """Requested operation is not legal at the session's current step."""

    http_status = 409


class ConflictError(ServiceError):
    http_status = 409


class RetriableError(ServiceError):
    """Transient failure (pipeline/provider); the client may retry."""

    http_status = 503
    retryable = True


class SessionService:
    """Application core behind the HTTP layer; one instance per process."""

    def __init__(
        self,
        store: SessionStore,
        pipeline: Pipeline,
        assessor: Assessor,
        max_upload_chars: int,
    ):
        self.store = store
        self.pipeline = pipeline
        self.assessor = assessor
        self.max_upload_chars = max_upload_chars
        self._locks_guard = threading.Lock()
        self._session_locks: dict[str, threading.Lock] = {}
        self._package_cache: dict[str, QuestionPackage] = {}
        self._question_index: dict[str, str] = {}  # question id -> bundle hash
        self._index_packages_on_disk()

    # -- helpers -------------------------------------------------------------

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._session_locks.setdefault(session_id, threading.Lock())

    def _get_state(self, session_id: str) -> SessionState:
        state = self.store.get_session(session_id)
        if state is None:
            raise NotFoundError(f"session {session_id} not found")
        return state

    def _require_step(self, state: SessionState, *steps: Step) -> None:
        if state.step not in steps:
            allowed = ", ".join(s.value for s in steps)
            raise StateError(
                f"session {state.session_id} is at step {state.step.value}; "
                f"this operation needs {allowed}"
            )

    def _index_packages_on_disk(self) -> None:
        for bundle_hash in self.store.packages.hashes():
            package = self.store.packages.load(bundle_hash)
            if package is not None:
                self._remember_package(bundle_hash, package)

    def _remember_package(self, bundle_hash: str, package: QuestionPackage) -> None:
        self._package_cache[bundle_hash] = package
        for question in package.questions:
            self._question_index[question.id] = bundle_hash

    def _package_for(self, state: SessionState) -> QuestionPackage:
        assert state.package_ref is not None
        package = self._package_cache.get(state.package_ref)
        if package is None:
            package = self.store.packages.load(state.package_ref)
            if package is None:
                raise StorageError(f"package {state.package_ref} missing from store")
            self._remember_package(state.package_ref, package)
        return package

    # -- workflow operations ---------------------------------------------------

    def create_session(self) -> SessionState:
        return self.store.create_session()

    def get_state(self, session_id: str) -> SessionState:
        return self._get_state(session_id)

    def upload_artifacts(
        self, session_id: str, problem_statement: str, source_code: str, filename: str
    ) -> SessionState:
        with self._session_lock(session_id):
            state = self._get_state(session_id)
            self._require_step(state, Step.CREATED)
            for name, text in (
                ("problem_statement", problem_statement),
                ("source_code", source_code),
            ):
                if not text.strip():
                    raise ValidationError(f"{name}: must be non-empty")
                if len(text) > self.max_upload_chars:
                    raise ValidationError(
                        f"{name}: exceeds the {self.max_upload_chars}-character limit"
                    )
            return self.store.record_artifacts(
                session_id, problem_statement, source_code, filename
            )

    def configure_session(self, session_id: str, verdict: Verdict) -> dict[str, Any]:
        """Declare the verdict and produce (or fetch) the question package.

        Returns the student view. A pipeline failure leaves the session at
        Configured; re-declaring the same verdict retries.
        """
        with self._session_lock(session_id):
            state = self._get_state(session_id)
            self._require_step(state, Step.ARTIFACTS_UPLOADED, Step.CONFIGURED)
            if state.step is Step.CONFIGURED:
                assert state.bundle is not None
                if state.bundle.verdict is not verdict:
                    raise ConflictError(
                        f"session already configured with verdict "
                        f"{state.bundle.verdict.value}; retry must use the same verdict"
                    )
            else:
                state = self.store.record_verdict(session_id, verdict)
            assert state.bundle is not None
            try:
                package = self.pipeline.get_or_run(state.bundle, self.store.packages)
            except PipelineError as exc:
                raise RetriableError(
                    f"question generation failed ({exc}); re-declare the verdict to retry"
                ) from exc
            self._remember_package(state.bundle.content_hash, package)
            state = self.store.record_package_ready(session_id, state.bundle.content_hash)
            return self._questions_view(state, package)

    def get_questions(self, session_id: str) -> dict[str, Any]:
        state = self._get_state(session_id)
        if state.step is Step.CONFIGURED:
            raise RetriableError("question package not ready; re-declare the verdict")
        self._require_step(state, Step.ANSWERING, Step.SUMMARIZED)
        return self._questions_view(state, self._package_for(state))

    def _questions_view(self, state: SessionState, package: QuestionPackage) -> dict[str, Any]:
        view = package.student_view()
        view["session_id"] = state.session_id
        view["step"] = state.step.value
        view["answered"] = {
            qid: {"question_id": qid, "score": ev.score, "hint": ev.hint}
            for qid, ev in state.answered.items()
        }
        view["drafts"] = dict(state.drafts)
        return view

    def submit_answer(self, session_id: str, question_id: str, answer: str) -> dict[str, Any]:
        with self._session_lock(session_id):
            state = self._get_state(session_id)
            self._require_step(state, Step.ANSWERING)
            package = self._package_for(state)
            try:
                question = package.question_by_id(question_id)
            except KeyError:
                raise NotFoundError(f"question {question_id} not in this session") from None
            if question_id in state.answered:
                raise ConflictError(f"question {question_id} already answered")
            assert state.bundle is not None
            try:
                evaluation = self.assessor.evaluate_answer(
                    question,
                    answer,
                    state.bundle,
                    reference_solution=package.reference_solution,
                )
            except (StageFormatError, GatewayError) as exc:
                self.store.record_answer_draft(session_id, question_id, answer)
                raise RetriableError(
                    f"evaluation failed ({type(exc).__name__}); your answer was kept as a draft"
                ) from exc
            self.store.record_answer(session_id, evaluation)
            return {
                "question_id": question_id,
                "score": evaluation.score,
                "hint": evaluation.hint,
            }

    def finalize_summary(self, session_id: str) -> tuple[SummaryReport, str]:
        """Build (once) and return the session summary with its canonical JSON."""
        with self._session_lock(session_id):
            state = self._get_state(session_id)
            if state.step is Step.SUMMARIZED:
                assert state.summary is not None and state.summary_json is not None
                return state.summary, state.summary_json
            self._require_step(state, Step.ANSWERING)
            if not state.answered:
                raise ValidationError("summary: requires at least one answered question")
            package = self._package_for(state)
            evaluations: list[tuple[ReflectionQuestion, Any]] = [
                (package.question_by_id(qid), ev) for qid, ev in state.answered.items()
            ]
            try:
                report = self.assessor.build_summary(
                    evaluations,
                    session_id,
                    reference_solution=package.reference_solution,
                )
            except (StageFormatError, GatewayError) as exc:
                raise RetriableError(f"summary generation failed ({exc})") from exc
            state = self.store.record_summary(session_id, report)
            assert state.summary is not None and state.summary_json is not None
            return state.summary, state.summary_json

    def rate_question(
        self, question_id: str, stars: int, session_id: str | None = None
    ) -> QuestionRating:
        if question_id not in self._question_index:
            raise NotFoundError(f"question {question_id} not found")
        rating = QuestionRating(question_id=question_id, stars=stars, rated_at=utc_now())
        self.store.record_rating(rating, session_id=session_id)
        return rating

    def rating_summary(self, question_id: str) -> dict[str, Any]:
        if question_id not in self._question_index:
            raise NotFoundError(f"question {question_id} not found")
        return {
            "question_id": question_id,
            "count": len(self.store.ratings_for(question_id)),
            "mean": self.store.rating_mean(question_id),
        }

    def instructor_package(self, bundle_hash: str) -> dict[str, Any]:
        package = self.store.packages.load(bundle_hash)
        if package is None:
            raise NotFoundError(f"package {bundle_hash} not found")
        return package.to_dict()

    def state_view(self, session_id: str) -> dict[str, Any]:
        state = self._get_state(session_id)
        view: dict[str, Any] = {
            "session_id": state.session_id,
            "step": state.step.value,
            "answered_count": len(state.answered),
        }
        if state.step in (Step.ANSWERING, Step.SUMMARIZED):
            view["questions"] = self._questions_view(state, self._package_for(state))
        if state.summary_json is not None:
            view["has_summary"] = True
        return view


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


def create_app(service: SessionService, instructor_token: str, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="cpreflect", docs_url=None, redoc_url=None)

    @app.exception_handler(ServiceError)
    async def _service_error(_request: Request, exc: ServiceError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.http_status,
            content={"error": str(exc), "retryable": exc.retryable},
        )

    @app.exception_handler(ValidationError)
    async def _validation_error(_request: Request, exc: ValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": str(exc), "retryable": False})

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/sessions")
    def create_session() -> dict[str, str]:
        state = service.create_session()
        return {"session_id": state.session_id, "step": state.step.value}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict[str, Any]:
        return service.state_view(session_id)

    @app.post("/sessions/{session_id}/artifacts")
    async def upload_artifacts(
        session_id: str, problem: UploadFile, code: UploadFile
    ) -> dict[str, Any]:
        problem_text = (await problem.read()).decode("utf-8", errors="replace")
        code_text = (await code.read()).decode("utf-8", errors="replace")
        state = service.upload_artifacts(
            session_id, problem_text, code_text, code.filename or "solution.txt"
        )
        return {"session_id": state.session_id, "step": state.step.value}

    @app.post("/sessions/{session_id}/verdict")
    def declare_verdict(session_id: str, body: dict[str, Any]) -> dict[str, Any]:
        verdict = Verdict.from_json(str(body.get("verdict", "")))
        return service.configure_session(session_id, verdict)

    @app.get("/sessions/{session_id}/questions")
    def get_questions(session_id: str) -> dict[str, Any]:
        return service.get_questions(session_id)

    @app.post("/sessions/{session_id}/questions/{question_id}/answer")
    def submit_answer(session_id: str, question_id: str, body: dict[str, Any]) -> dict[str, Any]:
        answer = body.get("answer")
        if not isinstance(answer, str):
            raise ValidationError("answer: must be a string")
        return service.submit_answer(session_id, question_id, answer)

    @app.post("/sessions/{session_id}/summary")
    def finalize_summary(session_id: str) -> Response:
        _report, report_json = service.finalize_summary(session_id)
        return Response(content=report_json, media_type="application/json")

    @app.post("/questions/{question_id}/rating")
    def rate_question(question_id: str, body: dict[str, Any]) -> dict[str, Any]:
        stars = body.get("stars")
        if not isinstance(stars, int) or isinstance(stars, bool):
            raise ValidationError("stars: must be an integer")
        session_id = body.get("session_id")
        rating = service.rate_question(question_id, stars, session_id=session_id)
        summary = service.rating_summary(question_id)
        return {"rating": rating.to_dict(), "aggregate": summary}

    @app.get("/instructor/packages/{bundle_hash}")
    def instructor_package(bundle_hash: str, request: Request) -> dict[str, Any]:
        header = request.headers.get("authorization", "")
        if header != f"Bearer {instructor_token}":
            return JSONResponse(  # type: ignore[return-value]
                status_code=401, content={"error": "instructor token required"}
            )
        return service.instructor_package(bundle_hash)

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def build_service(runtime: Runtime) -> SessionService:
    return SessionService(
        store=runtime.store,
        pipeline=runtime.pipeline,
        assessor=runtime.assessor,
        max_upload_chars=runtime.config.max_upload_chars,
    )


def app_from_config(config: AppConfig) -> FastAPI:
    runtime = build_runtime(config)
    service = build_service(runtime)
    return create_app(service, runtime.config.instructor_token, ui_dir=runtime.config.ui_dir)


def main(argv: list[str] | None = None) -> None:
    import uvicorn

    parser = argparse.ArgumentParser(description="Run the reflection-tutor service")
    parser.add_argument("--config", help="JSON config file (default: $OWL_CONFIG)")
    parser.add_argument("--host", help="bind address (overrides config)")
    parser.add_argument("--port", type=int, help="port (overrides config)")
    args = parser.parse_args(argv)
    config = load_app_config(args.config)
    if args.host:
        config.host = args.host
    if args.port is not None:
        config.port = args.port
    uvicorn.run(app_from_config(config), host=config.host, port=config.port, log_level="warning")


if __name__ == "__main__":
    main()
