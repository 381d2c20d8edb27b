"""Shared builders for scripted mock runs.

The sentinel markers (ANSWER-SECRET, RUBRIC-SECRET, REFSOL-SECRET) make
redaction failures detectable by plain substring search in any
student-facing payload.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from cpreflect.assessment import Assessor
from cpreflect.audit import AuditLog
from cpreflect.contracts import ContractRegistry, load_contracts
from cpreflect.domain import PipelineConfig, SubmissionBundle, Verdict
from cpreflect.gateway import Gateway, MockProvider, PromptRequest
from cpreflect.pipelines import Pipeline
from cpreflect.service import SessionService
from cpreflect.store import SessionStore

ANSWER_SECRET = "ANSWER-SECRET"
RUBRIC_SECRET = "RUBRIC-SECRET"
REFSOL_SECRET = "REFSOL-SECRET"

BLOOM_CYCLE = ["Remember", "Understand", "Apply", "Analyze", "Integrate"]

DEFAULT_HINT = "Revisit the loop bounds before checking the final index."

REFERENCE_CODE = (
    f"# {REFSOL_SECRET} baseline solution kept away from students\n"
    "def solve(values):\n"
    "    total = 0\n"
    "    for item in values:\n"
    "        total += item\n"
    "    return total\n"
    "\n"
    "print(solve([1, 2, 3]))"
)


def statements(n: int, prefix: str = "") -> list[str]:
    return [
        f"Why does your {prefix}solution stay correct for boundary case {i}?"
        for i in range(1, n + 1)
    ]


def question_list_text(items: list[str]) -> str:
    return "\n".join(f"{i}. {text}" for i, text in enumerate(items, start=1))


def answers_for(items: list[str]) -> list[str]:
    return [f"{ANSWER_SECRET} expected reasoning for item {i}" for i in range(1, len(items) + 1)]


def qa_text(items: list[str], answers: list[str]) -> str:
    lines = []
    for question, answer in zip(items, answers):
        lines.append(f"Q: {question}")
        lines.append(f"A: {answer}")
    return "\n".join(lines)


def rubric_block_text(n_questions: int, criteria_per_question: int = 1) -> str:
    lines = []
    for q in range(1, n_questions + 1):
        lines.append(f"QUESTION {q}:")
        for c in range(criteria_per_question):
            level = BLOOM_CYCLE[(q + c - 1) % len(BLOOM_CYCLE)]
            lines.append(f"CRITERION: Grasp of the core idea {q}.{c + 1}")
            lines.append(f"LEVEL: {level}")
            for k in range(4):
                lines.append(f"ANCHOR {k}: {RUBRIC_SECRET} level-{k} response for {q}.{c + 1}")
    return "\n".join(lines)


def packaged_json_text(
    items: list[str],
    answers: list[str] | None = None,
    criteria_per_question: int = 1,
) -> str:
    questions = []
    for i, statement in enumerate(items):
        rubric = []
        for c in range(criteria_per_question):
            level = BLOOM_CYCLE[(i + c) % len(BLOOM_CYCLE)]
            rubric.append(
                {
                    "description": f"Grasp of the core idea {i + 1}.{c + 1}",
                    "bloom_level": level,
                    "score_anchors": {
                        str(k): f"{RUBRIC_SECRET} level-{k} response for {i + 1}.{c + 1}"
                        for k in range(4)
                    },
                }
            )
        entry: dict = {"statement": statement, "rubric": rubric}
        if answers is not None:
            entry["expected_answer"] = answers[i]
        questions.append(entry)
    return json.dumps({"questions": questions})


def feedback_text(score: int = 2, hint: str = DEFAULT_HINT) -> str:
    return f"SCORE: {score}\nHINT: {hint}"


def summary_rows_text(rows: list[tuple[str, int, str]]) -> str:
    return "\n".join(f"{title} | {score} | {feedback}" for title, score, feedback in rows)


def reference_block_text(code: str = REFERENCE_CODE) -> str:
    return f"```python\n{code}\n```"


_SUMMARY_BLOCK_RE = re.compile(
    r"^\d+\. QUESTION: (?P<statement>.*)\n"
    r"   SCORE: (?P<score>\d+)\n"
    r"   FEEDBACK: (?P<feedback>.*)$",
    re.MULTILINE,
)


def summary_echo(request: PromptRequest, _rendered: str) -> str:
    """Echoing summary script: valid rows for whatever was asked."""
    section = dict(request.sections)["answered_questions"]
    rows = []
    for i, m in enumerate(_SUMMARY_BLOCK_RE.finditer(section), start=1):
        rows.append((f"Reflection point {i}", int(m.group("score")), m.group("feedback")))
    return summary_rows_text(rows)


def script_all_cases(provider: MockProvider, config: PipelineConfig) -> dict[str, list[str]]:
    """Register valid stage defaults for the all-cases flow; returns the texts used."""
    drafted = statements(config.draft_question_count, prefix="drafted ")
    refined = statements(config.refined_question_count)
    answers = answers_for(refined)
    provider.script_stage("generator_draft", question_list_text(drafted))
    provider.script_stage("reviewer_refine", question_list_text(refined))
    provider.script_stage("generator_answers", qa_text(refined, answers))
    provider.script_stage(
        "reviewer_rubric@expected_answers", rubric_block_text(len(refined))
    )
    provider.script_stage(
        "formatter_package@expected_answers", packaged_json_text(refined, answers)
    )
    return {"drafted": drafted, "refined": refined, "answers": answers}


def script_some_or_none(provider: MockProvider, config: PipelineConfig) -> dict[str, list[str]]:
    drafted = statements(config.fail_draft_count, prefix="diagnostic ")
    selected = statements(config.fail_selected_count, prefix="selected ")
    provider.script_stage("generator_reference", reference_block_text())
    provider.script_stage("generator_questions", question_list_text(drafted))
    provider.script_stage("reviewer_select", question_list_text(selected))
    provider.script_stage("reviewer_rubric", rubric_block_text(len(selected)))
    provider.script_stage("formatter_package", packaged_json_text(selected))
    return {"drafted": drafted, "selected": selected}


def script_grading(provider: MockProvider, score: int = 2, hint: str = DEFAULT_HINT) -> None:
    provider.script_stage("feedback", feedback_text(score, hint))
    provider.script_stage("summary_titles", summary_echo)


def script_everything(provider: MockProvider, config: PipelineConfig) -> None:
    script_all_cases(provider, config)
    script_some_or_none(provider, config)
    script_grading(provider)


@dataclass(frozen=True)
class ContractCase:
    """One contract with a passing and a failing sample output."""

    name: str
    contract: object
    good: str
    bad: str


def contract_cases(contracts: ContractRegistry) -> list[ContractCase]:
    """Good/bad sample pairs covering every shipped contract."""
    samples = [
        ContractCase(
            "question_list",
            contracts["question_list"].bind(expected_count=3),
            question_list_text(statements(3)),
            "here are some questions without any numbering",
        ),
        ContractCase(
            "expected_answers",
            contracts["expected_answers"].bind(expected_count=2),
            qa_text(statements(2), ["First answer.", "Second answer."]),
            "Q: only a question line with no answer",
        ),
        ContractCase(
            "rubric",
            contracts["rubric"].bind(expected_questions=2),
            rubric_block_text(2),
            "QUESTION 1:\nCRITERION: missing level and anchors",
        ),
        ContractCase(
            "feedback",
            contracts["feedback"].bind(word_limit=20),
            "SCORE: 2\nHINT: check loop bounds",
            "score two, hint none",
        ),
        ContractCase(
            "summary",
            contracts["summary"].bind(
                title_word_limit=5,
                expected_rows=[
                    {"score": 2, "feedback": "watch the bounds"},
                    {"score": 3, "feedback": "solid reasoning"},
                ],
            ),
            "Bounds check | 2 | watch the bounds\nComplexity argument | 3 | solid reasoning",
            "a summary without any pipes",
        ),
        ContractCase(
            "packaged_json",
            contracts["packaged_json"].bind(
                scenario="AllCases",
                expected_count=2,
                allowed_statements=statements(2),
            ),
            packaged_json_text(statements(2), answers_for(statements(2))),
            "this is not a JSON object at all",
        ),
        ContractCase(
            "reference_solution",
            contracts["reference_solution"],
            reference_block_text(),
            "print('no fences around this code')",
        ),
    ]
    assert {case.name for case in samples} == set(contracts.names())
    return samples


def mock_script_data(config: PipelineConfig, summary_rows: int = 1) -> dict:
    """Script-file payload driving full pipelines for any bundle."""
    drafted = statements(config.draft_question_count, prefix="drafted ")
    refined = statements(config.refined_question_count)
    answers = answers_for(refined)
    fail_drafted = statements(config.fail_draft_count, prefix="diagnostic ")
    selected = statements(config.fail_selected_count, prefix="selected ")
    rows = [(f"Reflection point {i}", 2, DEFAULT_HINT) for i in range(1, summary_rows + 1)]
    return {
        "stage_defaults": {
            "generator_draft": question_list_text(drafted),
            "reviewer_refine": question_list_text(refined),
            "generator_answers": qa_text(refined, answers),
            "reviewer_rubric@expected_answers": rubric_block_text(len(refined)),
            "formatter_package@expected_answers": packaged_json_text(refined, answers),
            "generator_reference": reference_block_text(),
            "generator_questions": question_list_text(fail_drafted),
            "reviewer_select": question_list_text(selected),
            "reviewer_rubric": rubric_block_text(len(selected)),
            "formatter_package": packaged_json_text(selected),
            "feedback": feedback_text(),
            "summary_titles": summary_rows_text(rows),
        }
    }


def write_app_config(
    directory,
    config: PipelineConfig | None = None,
    summary_rows: int = 1,
    stage_timeout_s: float = 60.0,
    instructor_token: str = "sekrit",
) -> str:
    """Write a mock-provider app config + script under *directory*."""
    from pathlib import Path

    config = config or PipelineConfig()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    script_path = directory / "mock_script.json"
    script_path.write_text(json.dumps(mock_script_data(config, summary_rows)), "utf-8")
    app_config = {
        "provider": {"kind": "mock", "script": str(script_path)},
        "pipeline": config.to_dict(),
        "timeouts": {"stage_s": stage_timeout_s, "run_s": 240.0},
        "storage": {
            "root": str(directory / "data"),
            "audit_log": str(directory / "data" / "audit.jsonl"),
        },
        "instructor_token": instructor_token,
    }
    config_path = directory / "config.json"
    config_path.write_text(json.dumps(app_config), "utf-8")
    return str(config_path)


PROBLEM = "Sum two integers A and B given on one line of standard input."
CODE = "a, b = map(int, input().split())\nprint(a + b)"


def make_bundle(
    problem: str = PROBLEM,
    code: str = CODE,
    verdict: Verdict = Verdict.ALL_PASSED,
    filename: str = "solution.py",
) -> SubmissionBundle:
    return SubmissionBundle.create(problem, code, filename, verdict)


@dataclass
class Rig:
    """A fully wired offline stack around one MockProvider."""

    provider: MockProvider
    audit: AuditLog
    gateway: Gateway
    contracts: ContractRegistry
    config: PipelineConfig
    pipeline: Pipeline
    assessor: Assessor
    scripted: dict[str, dict[str, list[str]]] = field(default_factory=dict)

    @property
    def scripted_refined(self) -> list[str]:
        return self.scripted["all_cases"]["refined"]

    @property
    def scripted_selected(self) -> list[str]:
        return self.scripted["some_or_none"]["selected"]


def make_rig(
    config: PipelineConfig | None = None,
    audit_path=None,
    stage_timeout_s: float = 60.0,
    run_timeout_s: float = 240.0,
    script: bool = True,
) -> Rig:
    config = config or PipelineConfig()
    provider = MockProvider()
    audit = AuditLog(audit_path)
    gateway = Gateway(provider, audit)
    contracts = load_contracts()
    pipeline = Pipeline(
        gateway, contracts, config,
        stage_timeout_s=stage_timeout_s, run_timeout_s=run_timeout_s,
    )
    assessor = Assessor(gateway, contracts, config, stage_timeout_s=stage_timeout_s)
    rig = Rig(
        provider=provider,
        audit=audit,
        gateway=gateway,
        contracts=contracts,
        config=config,
        pipeline=pipeline,
        assessor=assessor,
    )
    if script:
        rig.scripted["all_cases"] = script_all_cases(provider, config)
        rig.scripted["some_or_none"] = script_some_or_none(provider, config)
        script_grading(provider)
    return rig


def make_service(
    storage_root,
    config: PipelineConfig | None = None,
    durable: bool = True,
    script: bool = True,
    max_upload_chars: int = 65536,
) -> tuple[SessionService, Rig, SessionStore]:
    rig = make_rig(config, script=script)
    store = SessionStore(storage_root, durable=durable)
    service = SessionService(
        store=store,
        pipeline=rig.pipeline,
        assessor=rig.assessor,
        max_upload_chars=max_upload_chars,
    )
    return service, rig, store
