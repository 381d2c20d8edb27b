"""Reflection tutor for competitive programming.

Post-submission workflow: dual-role LLM prompt chains generate
Bloom-aligned reflection questions from a problem/code pair, free-text
answers are scored 0-3 against generated rubrics with bounded hints, and
sessions close with a compiled summary table. Every LLM stage is held to
a machine-checkable output contract with regenerate-on-mismatch, and a
deterministic mock provider makes the whole system testable offline.
"""

from .assessment import Assessor, SummaryReport, SummaryRow
from .audit import AuditLog
from .config import AppConfig, Runtime, build_runtime, load_app_config
from .contracts import (
    ContractRegistry,
    FormatContract,
    StageFormatError,
    Status,
    ValidationOutcome,
    load_contracts,
    run_with_regeneration,
    validate,
)
from .domain import (
    AnswerEvaluation,
    BloomLevel,
    PipelineConfig,
    QuestionRating,
    ReflectionQuestion,
    RubricCriterion,
    Scenario,
    SubmissionBundle,
    ValidationError,
    Verdict,
    compute_content_hash,
    word_count,
)
from .gateway import (
    ClientRole,
    Gateway,
    GatewayError,
    HttpChatProvider,
    MockProvider,
    PromptRequest,
    ProviderResponse,
    StageTimeoutError,
    render_prompt,
)
from .pipelines import (
    ALL_CASES_STAGES,
    SOME_OR_NONE_STAGES,
    Pipeline,
    PipelineError,
    PipelineRun,
    QuestionPackage,
    StageRecord,
)
from .service import SessionService, create_app
from .store import PackageStore, SessionStore, Step

__version__ = "0.1.0"
