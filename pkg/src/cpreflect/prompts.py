"""Versioned prompt templates for every pipeline stage.

Each builder returns a fully-specified :class:`PromptRequest`: a persona
line, delimited context sections carrying the previous stage's validated
output, and an instruction that embeds the output contract's own
description, so the format we ask for is the format we validate.
"""

from __future__ import annotations

from .contracts import FormatContract
from .domain import PipelineConfig, RubricCriterion, SubmissionBundle, Verdict
from .gateway import ClientRole, PromptRequest

PROMPTS_VERSION = 1

DEFAULT_PERSONAS: dict[ClientRole, str] = {
    ClientRole.GENERATOR: (
        "You are a Competitive Programming Professor who writes reflective, "
        "open-ended study questions grounded in a student's own code."
    ),
    ClientRole.REVIEWER: (
        "You are a Competitive Programming Professor reviewing draft reflection "
        "questions for clarity, cognitive depth, and instructional value."
    ),
    ClientRole.FORMATTER: (
        "You are a meticulous formatting assistant that converts reviewed "
        "course material into machine-readable JSON without changing its content."
    ),
    ClientRole.FEEDBACK: (
        "You are a Competitive Programming teaching assistant grading a "
        "student's written reflection against a rubric."
    ),
    ClientRole.SUMMARY_MAKER: (
        "You are a teaching assistant compiling a concise end-of-session "
        "summary table for a student."
    ),
}

#: Cognitive-level verb guidance embedded in answer and rubric prompts.
BLOOM_VERB_GUIDE = (
    "Spread the cognitive demand across levels, using verbs such as recall "
    "and state (Remember), explain and restate (Understand), trace and "
    "demonstrate (Apply), compare and decompose (Analyze), and combine and "
    "generalize (Integrate)."
)


def _persona(role: ClientRole, personas: dict[ClientRole, str] | None) -> str:
    if personas and role in personas:
        return personas[role]
    return DEFAULT_PERSONAS[role]


def _instruction(task: str, contract: FormatContract) -> str:
    lines = [task, "", "OUTPUT FORMAT:", contract.description]
    lines.extend(contract.constraint_notes())
    return "\n".join(lines)


def _numbered(items: list[str]) -> str:
    return "\n".join(f"{i}. {text}" for i, text in enumerate(items, start=1))


def render_rubric_text(rubric: list[RubricCriterion]) -> str:
    """Render criteria for embedding into grading prompts."""
    parts = []
    for criterion in rubric:
        parts.append(f"- ({criterion.bloom_level.label}) {criterion.description}")
        for score in range(4):
            parts.append(f"  {score}: {criterion.anchor_for(score)}")
    return "\n".join(parts)


def draft_questions(
    bundle: SubmissionBundle,
    config: PipelineConfig,
    contract: FormatContract,
    personas: dict[ClientRole, str] | None = None,
) -> PromptRequest:
    task = (
        "The student's solution passed every test case. Draft open-ended "
        "reflection questions about this submission: why the algorithm is "
        "correct (including edge cases), why this data structure or approach "
        "was the right choice, and how its time and space complexity hold up "
        "against the constraints. " + BLOOM_VERB_GUIDE
    )
    return PromptRequest(
        role=ClientRole.GENERATOR,
        persona=_persona(ClientRole.GENERATOR, personas),
        sections=(
            ("problem", bundle.problem_statement),
            ("code", bundle.source_code),
        ),
        instruction=_instruction(task, contract),
        temperature=config.temperature,
    )


def refine_questions(
    bundle: SubmissionBundle,
    draft: list[str],
    config: PipelineConfig,
    contract: FormatContract,
    personas: dict[ClientRole, str] | None = None,
) -> PromptRequest:
    task = (
        "From the draft questions below, keep the most pedagogically useful "
        "ones. Drop redundant or low-relevance items and rephrase the keepers "
        "for clarity and cognitive depth."
    )
    return PromptRequest(
        role=ClientRole.REVIEWER,
        persona=_persona(ClientRole.REVIEWER, personas),
        sections=(
            ("problem", bundle.problem_statement),
            ("code", bundle.source_code),
            ("draft_questions", _numbered(draft)),
        ),
        instruction=_instruction(task, contract),
        temperature=config.temperature,
    )


def expected_answers(
    bundle: SubmissionBundle,
    questions: list[str],
    config: PipelineConfig,
    contract: FormatContract,
    personas: dict[ClientRole, str] | None = None,
) -> PromptRequest:
    task = (
        "Write the expected answer for each reflection question below, "
        "grounded in this specific problem and code. " + BLOOM_VERB_GUIDE
    )
    return PromptRequest(
        role=ClientRole.GENERATOR,
        persona=_persona(ClientRole.GENERATOR, personas),
        sections=(
            ("problem", bundle.problem_statement),
            ("code", bundle.source_code),
            ("questions", _numbered(questions)),
        ),
        instruction=_instruction(task, contract),
        temperature=config.temperature,
    )


def build_rubric(
    bundle: SubmissionBundle,
    questions: list[str],
    config: PipelineConfig,
    contract: FormatContract,
    answers: list[str] | None = None,
    personas: dict[ClientRole, str] | None = None,
) -> PromptRequest:
    task = (
        "Build scoring criteria for each question below. Tag every criterion "
        "with the Bloom level it exercises and write descriptive anchors for "
        "scores 0 through 3. " + BLOOM_VERB_GUIDE
    )
    sections: list[tuple[str, str]] = [
        ("problem", bundle.problem_statement),
        ("code", bundle.source_code),
        ("questions", _numbered(questions)),
    ]
    if answers is not None:
        sections.append(("expected_answers", _numbered(answers)))
    return PromptRequest(
        role=ClientRole.REVIEWER,
        persona=_persona(ClientRole.REVIEWER, personas),
        sections=tuple(sections),
        instruction=_instruction(task, contract),
        temperature=config.temperature,
    )


def package_questions(
    questions: list[str],
    rubric_text: str,
    config: PipelineConfig,
    contract: FormatContract,
    answers: list[str] | None = None,
    personas: dict[ClientRole, str] | None = None,
) -> PromptRequest:
    task = (
        "Package the reviewed material below as JSON for the user interface. "
        "Copy the question statements verbatim and keep their order."
    )
    sections: list[tuple[str, str]] = [("questions", _numbered(questions))]
    if answers is not None:
        sections.append(("expected_answers", _numbered(answers)))
    sections.append(("rubrics", rubric_text))
    return PromptRequest(
        role=ClientRole.FORMATTER,
        persona=_persona(ClientRole.FORMATTER, personas),
        sections=tuple(sections),
        instruction=_instruction(task, contract),
        temperature=config.temperature,
    )


def reference_solution(
    bundle: SubmissionBundle,
    config: PipelineConfig,
    contract: FormatContract,
    personas: dict[ClientRole, str] | None = None,
) -> PromptRequest:
    task = (
        f"The student's submission was judged {bundle.verdict.value}. Write a "
        f"correct, complete {config.reference_solution_language} solution to "
        "the problem to serve as a baseline for diagnosing their code."
    )
    return PromptRequest(
        role=ClientRole.GENERATOR,
        persona=_persona(ClientRole.GENERATOR, personas),
        sections=(
            ("problem", bundle.problem_statement),
            ("code", bundle.source_code),
            ("verdict", bundle.verdict.value),
        ),
        instruction=_instruction(task, contract),
        temperature=config.temperature,
    )


def diagnostic_questions(
    bundle: SubmissionBundle,
    reference: str,
    config: PipelineConfig,
    contract: FormatContract,
    personas: dict[ClientRole, str] | None = None,
) -> PromptRequest:
    task = (
        "The student's submission failed. Craft free-response prompts that "
        "probe the logic gaps between their code and a working approach: "
        "likely error categories, edge cases and assumptions to re-check, and "
        "how they would plan a revision. Do not quote the reference solution."
    )
    return PromptRequest(
        role=ClientRole.GENERATOR,
        persona=_persona(ClientRole.GENERATOR, personas),
        sections=(
            ("problem", bundle.problem_statement),
            ("code", bundle.source_code),
            ("verdict", bundle.verdict.value),
            ("reference_solution", reference),
        ),
        instruction=_instruction(task, contract),
        temperature=config.temperature,
    )


def select_questions(
    bundle: SubmissionBundle,
    draft: list[str],
    config: PipelineConfig,
    contract: FormatContract,
    personas: dict[ClientRole, str] | None = None,
) -> PromptRequest:
    task = (
        f"The submission's verdict was {bundle.verdict.value}. From the draft "
        "prompts below, choose the ones most helpful for diagnosing exactly "
        "that failure mode, rephrasing for clarity where needed."
    )
    return PromptRequest(
        role=ClientRole.REVIEWER,
        persona=_persona(ClientRole.REVIEWER, personas),
        sections=(
            ("problem", bundle.problem_statement),
            ("code", bundle.source_code),
            ("verdict", bundle.verdict.value),
            ("draft_questions", _numbered(draft)),
        ),
        instruction=_instruction(task, contract),
        temperature=config.temperature,
    )


def grade_answer(
    bundle: SubmissionBundle,
    question_statement: str,
    rubric: list[RubricCriterion],
    student_answer: str,
    config: PipelineConfig,
    contract: FormatContract,
    expected_answer: str | None = None,
    personas: dict[ClientRole, str] | None = None,
) -> PromptRequest:
    task = (
        "Compare the student's answer against each rubric criterion, then "
        "assign one overall score from 0 to 3 for relevance and correctness "
        "and write one concise hint that nudges them forward without "
        "revealing the full solution."
    )
    sections: list[tuple[str, str]] = [
        ("problem", bundle.problem_statement),
        ("code", bundle.source_code),
        ("question", question_statement),
    ]
    if expected_answer is not None:
        sections.append(("expected_answer", expected_answer))
    sections.append(("rubric", render_rubric_text(rubric)))
    sections.append(("student_answer", student_answer if student_answer.strip() else "(no answer given)"))
    return PromptRequest(
        role=ClientRole.FEEDBACK,
        persona=_persona(ClientRole.FEEDBACK, personas),
        sections=tuple(sections),
        instruction=_instruction(task, contract),
        temperature=config.temperature,
    )


def summarize_session(
    answered: list[dict[str, object]],
    config: PipelineConfig,
    contract: FormatContract,
    personas: dict[ClientRole, str] | None = None,
) -> PromptRequest:
    """answered: dicts with 'statement', 'score', 'feedback' in answer order."""
    blocks = []
    for i, row in enumerate(answered, start=1):
        blocks.append(
            f"{i}. QUESTION: {row['statement']}\n"
            f"   SCORE: {row['score']}\n"
            f"   FEEDBACK: {row['feedback']}"
        )
    task = (
        "Give each answered question below a short descriptive title, then "
        "emit the summary rows."
    )
    return PromptRequest(
        role=ClientRole.SUMMARY_MAKER,
        persona=_persona(ClientRole.SUMMARY_MAKER, personas),
        sections=(("answered_questions", "\n".join(blocks)),),
        instruction=_instruction(task, contract),
        temperature=config.temperature,
    )
