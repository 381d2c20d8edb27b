"""Machine-checkable output formats for every LLM stage.

A contract couples a grammar (regex plus per-mode structure) with the
semantic bounds that make an output usable downstream: item counts, score
ranges, word limits, verbatim-echo requirements, and reference-solution
redaction. A syntactically well-formed output that violates a bound is a
Mismatch like any other, and Mismatch triggers regeneration: the same
prompt is re-issued unchanged up to the configured attempt budget.
"""

from __future__ import annotations

import json
import re
import time
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from .audit import AuditLog
from .domain import (
    BloomLevel,
    PipelineConfig,
    RubricCriterion,
    ValidationError,
    contains_long_token_run,
    word_count,
)
from .gateway import Gateway, GatewayError, PromptRequest, ProviderResponse, StageTimeoutError

#: Tokens of reference solution that may not appear consecutively in
#: student-facing text.
REDACTION_RUN_LENGTH = 10


class Status(Enum):
    VALID = "Valid"
    MISMATCH = "Mismatch"


@dataclass(frozen=True)
class ValidationOutcome:
    """Result of checking raw provider text against one contract."""

    status: Status
    parsed: Any = None
    diagnostics: str | None = None

    def __post_init__(self) -> None:
        if self.status is Status.VALID and (self.parsed is None or self.diagnostics):
            raise ValidationError("outcome: Valid must carry parsed and no diagnostics")
        if self.status is Status.MISMATCH and (
            self.parsed is not None or not self.diagnostics
        ):
            raise ValidationError("outcome: Mismatch must carry diagnostics only")


def _valid(parsed: Any) -> ValidationOutcome:
    return ValidationOutcome(Status.VALID, parsed=parsed)


def _mismatch(diagnostics: str) -> ValidationOutcome:
    return ValidationOutcome(Status.MISMATCH, diagnostics=diagnostics)


@dataclass(frozen=True)
class FormatContract:
    """One stage's output grammar plus its bound semantic constraints.

    Contracts load immutable from the versioned contracts file; pipelines
    specialize them with :meth:`bind` (returning a new instance) so the
    prompt they describe and the validator they drive can never drift
    apart.
    """

    name: str
    mode: str
    pattern: str
    parse_spec: dict[str, str]
    description: str
    aux_patterns: dict[str, str] = field(default_factory=dict)
    constraints: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        compiled = re.compile(self.pattern)
        known_groups = set(compiled.groupindex)
        for source in self.aux_patterns.values():
            known_groups |= set(re.compile(source).groupindex)
        missing = set(self.parse_spec) - known_groups
        if missing:
            raise ValidationError(
                f"contract {self.name}: parse_spec groups {sorted(missing)} not in pattern"
            )

    @property
    def compiled(self) -> re.Pattern[str]:
        return _compile(self.pattern)

    def aux(self, key: str) -> re.Pattern[str]:
        return _compile(self.aux_patterns[key])

    def bind(self, **constraints: Any) -> "FormatContract":
        merged = dict(self.constraints)
        merged.update(constraints)
        return replace(self, constraints=merged)

    def constraint_notes(self) -> list[str]:
        """Human sentences for the bound constraints, embedded in prompts.

        Derived from the same dict the validator reads, so the instruction
        and the check share one source of truth.
        """
        notes: list[str] = []
        c = self.constraints
        if "expected_count" in c:
            notes.append(f"Produce exactly {c['expected_count']} items.")
        if "expected_questions" in c:
            notes.append(f"Cover exactly {c['expected_questions']} questions, in order.")
        if "min_criteria" in c or "max_criteria" in c:
            notes.append(
                f"Give between {c.get('min_criteria', 1)} and {c.get('max_criteria', 4)} "
                "criteria per question."
            )
        if "word_limit" in c:
            notes.append(f"The hint must be at most {c['word_limit']} words.")
        if "title_word_limit" in c:
            notes.append(f"Each title must be at most {c['title_word_limit']} words.")
        if "expected_rows" in c:
            notes.append(f"Output exactly {len(c['expected_rows'])} rows, in the given order.")
        return notes


_COMPILE_CACHE: dict[str, re.Pattern[str]] = {}
_COMPILE_LOCK = threading.Lock()


def _compile(source: str) -> re.Pattern[str]:
    with _COMPILE_LOCK:
        pattern = _COMPILE_CACHE.get(source)
        if pattern is None:
            pattern = _COMPILE_CACHE[source] = re.compile(source)
        return pattern


@dataclass(frozen=True)
class ContractRegistry:
    """All shipped contracts, loaded once at startup."""

    version: int
    contracts: dict[str, FormatContract]

    def __getitem__(self, name: str) -> FormatContract:
        try:
            return self.contracts[name]
        except KeyError:
            raise ValidationError(f"contract: unknown contract {name!r}") from None

    def names(self) -> list[str]:
        return sorted(self.contracts)


def load_contracts(path: str | Path | None = None) -> ContractRegistry:
    """Load the versioned contracts file (packaged copy by default)."""
    if path is None:
        text = resources.files("cpreflect").joinpath("data/contracts.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    data = json.loads(text)
    contracts = {}
    for raw in data["contracts"]:
        contract = FormatContract(
            name=raw["name"],
            mode=raw["mode"],
            pattern=raw["pattern"],
            parse_spec=raw["parse_spec"],
            description=raw["description"],
            aux_patterns=raw.get("aux_patterns", {}),
        )
        contracts[contract.name] = contract
    return ContractRegistry(version=data["version"], contracts=contracts)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(raw: str, contract: FormatContract) -> ValidationOutcome:
    """Check raw provider text against a contract.

    Mismatch is a value, not an error: diagnostics name the first
    divergence (line/offset) or the violated bound. A Valid outcome's
    parsed value always satisfies the target domain invariants.
    """
    try:
        handler = _MODE_HANDLERS[contract.mode]
    except KeyError:
        raise ValidationError(f"contract {contract.name}: unknown mode {contract.mode!r}")
    try:
        return handler(raw, contract)
    except ValidationError as exc:
        return _mismatch(f"parsed value violates domain invariants: {exc}")


def _line_offsets(raw: str) -> list[int]:
    offsets = [0]
    for line in raw.splitlines(keepends=True):
        offsets.append(offsets[-1] + len(line))
    return offsets


def _validate_numbered_lines(raw: str, contract: FormatContract) -> ValidationOutcome:
    if not raw.strip():
        return _mismatch("offset 0: empty output; expected 'N. <question text>' lines")
    line_re = contract.aux("line")
    offsets = _line_offsets(raw)
    items: list[str] = []
    for i, line in enumerate(raw.splitlines()):
        m = line_re.match(line)
        if not m:
            return _mismatch(
                f"line {i + 1} (offset {offsets[i]}): expected 'N. <question text>', "
                f"got {line[:80]!r}"
            )
        number = int(m.group("number"))
        if number != i + 1:
            return _mismatch(
                f"line {i + 1} (offset {offsets[i]}): expected item number {i + 1}, got {number}"
            )
        items.append(m.group("text"))
    expected = contract.constraints.get("expected_count")
    if expected is not None and len(items) != expected:
        return _mismatch(f"expected exactly {expected} items, got {len(items)}")
    if len(set(items)) != len(items):
        return _mismatch("duplicate items in list")
    return _valid(items)


def _validate_qa_pairs(raw: str, contract: FormatContract) -> ValidationOutcome:
    lines = raw.splitlines()
    if not raw.strip():
        return _mismatch("offset 0: empty output; expected 'Q:'/'A:' line pairs")
    offsets = _line_offsets(raw)
    pairs: list[tuple[str, str]] = []
    for i, line in enumerate(lines):
        want_q = i % 2 == 0
        prefix = "Q:" if want_q else "A:"
        m = re.match(rf"\A{prefix}[ \t](?P<text>\S.*?)[ \t]*\Z", line)
        if not m:
            return _mismatch(
                f"line {i + 1} (offset {offsets[i]}): expected '{prefix} <text>', got {line[:80]!r}"
            )
        if want_q:
            pairs.append((m.group("text"), ""))
        else:
            pairs[-1] = (pairs[-1][0], m.group("text"))
    if len(lines) % 2 != 0:
        return _mismatch(f"line {len(lines)}: 'Q:' line without a matching 'A:' line")
    expected = contract.constraints.get("expected_count")
    if expected is not None and len(pairs) != expected:
        return _mismatch(f"expected exactly {expected} Q/A pairs, got {len(pairs)}")
    return _valid(pairs)


def _validate_rubric_blocks(raw: str, contract: FormatContract) -> ValidationOutcome:
    if not raw.strip():
        return _mismatch("offset 0: empty output; expected 'QUESTION N:' blocks")
    header_re = contract.aux("header")
    criterion_re = contract.aux("criterion")
    lines = raw.splitlines()
    offsets = _line_offsets(raw)

    # Split into question blocks on header lines.
    blocks: list[tuple[int, int, list[str]]] = []  # (question number, line index, lines)
    for i, line in enumerate(lines):
        m = header_re.match(line)
        if m:
            blocks.append((int(m.group("number")), i, []))
        elif blocks:
            blocks[-1][2].append(line)
        else:
            return _mismatch(
                f"line 1 (offset {offsets[0]}): expected 'QUESTION 1:', got {line[:80]!r}"
            )

    min_criteria = contract.constraints.get("min_criteria", 1)
    max_criteria = contract.constraints.get("max_criteria", 4)
    parsed: list[list[RubricCriterion]] = []
    for position, (number, line_index, body) in enumerate(blocks, start=1):
        if number != position:
            return _mismatch(
                f"line {line_index + 1}: expected 'QUESTION {position}:', got number {number}"
            )
        block_text = "\n".join(body)
        criteria: list[RubricCriterion] = []
        cursor = 0
        while cursor < len(block_text):
            m = criterion_re.match(block_text, cursor)
            if not m:
                bad = block_text[cursor : cursor + 80]
                return _mismatch(
                    f"question {number}: expected a six-line CRITERION block, got {bad!r}"
                )
            level_name = m.group("level")
            try:
                level = BloomLevel.from_json(level_name)
            except ValidationError:
                return _mismatch(
                    f"question {number}: unknown Bloom level {level_name!r}; expected one of "
                    + ", ".join(l.label for l in BloomLevel)
                )
            criteria.append(
                RubricCriterion(
                    description=m.group("description").strip(),
                    bloom_level=level,
                    score_anchors=tuple(
                        m.group(f"anchor{i}").strip() for i in range(4)
                    ),
                )
            )
            cursor = m.end()
            if cursor < len(block_text) and block_text[cursor] == "\n":
                cursor += 1
        if not min_criteria <= len(criteria) <= max_criteria:
            return _mismatch(
                f"question {number}: {len(criteria)} criteria outside "
                f"[{min_criteria}, {max_criteria}]"
            )
        parsed.append(criteria)

    expected = contract.constraints.get("expected_questions")
    if expected is not None and len(parsed) != expected:
        return _mismatch(f"expected rubric blocks for exactly {expected} questions, got {len(parsed)}")
    return _valid(parsed)


def _validate_key_values(raw: str, contract: FormatContract) -> ValidationOutcome:
    m = contract.compiled.search(raw)
    if not m:
        lines = raw.splitlines() or [""]
        if not re.match(r"\ASCORE:[ \t]-?[0-9]+[ \t]*\Z", lines[0]):
            return _mismatch(
                f"line 1 (offset 0): expected 'SCORE: <n>', got {lines[0][:80]!r}"
            )
        if len(lines) < 2 or not lines[1].startswith("HINT:"):
            return _mismatch(
                f"line 2 (offset {len(lines[0]) + 1}): expected 'HINT: <text>'"
            )
        return _mismatch("trailing content after the HINT line")
    score = int(m.group("score"))
    if not 0 <= score <= 3:
        return _mismatch(f"score {score} outside [0, 3]")
    hint = m.group("hint").strip()
    if not hint:
        return _mismatch("hint: must be non-empty")
    limit = contract.constraints.get("word_limit")
    if limit is not None and word_count(hint) > limit:
        return _mismatch(f"hint is {word_count(hint)} words; limit is {limit}")
    forbidden = contract.constraints.get("forbidden_text")
    if forbidden and contains_long_token_run(hint, forbidden, REDACTION_RUN_LENGTH):
        return _mismatch("hint reveals the reference solution")
    return _valid({"score": score, "hint": hint})


def _validate_summary_rows(raw: str, contract: FormatContract) -> ValidationOutcome:
    if not raw.strip():
        return _mismatch("offset 0: empty output; expected '<title> | <score> | <feedback>' rows")
    row_re = contract.aux("row")
    offsets = _line_offsets(raw)
    rows: list[dict[str, Any]] = []
    for i, line in enumerate(raw.splitlines()):
        m = row_re.match(line)
        if not m:
            return _mismatch(
                f"line {i + 1} (offset {offsets[i]}): expected '<title> | <score> | <feedback>', "
                f"got {line[:80]!r}"
            )
        rows.append(
            {
                "title": m.group("title").strip(),
                "score_text": m.group("score"),
                "feedback": m.group("feedback"),
            }
        )
    title_limit = contract.constraints.get("title_word_limit")
    expected_rows = contract.constraints.get("expected_rows")
    if expected_rows is not None and len(rows) != len(expected_rows):
        return _mismatch(f"expected exactly {len(expected_rows)} rows, got {len(rows)}")
    forbidden = contract.constraints.get("forbidden_text")
    for i, row in enumerate(rows):
        if not row["title"]:
            return _mismatch(f"row {i + 1}: empty title")
        if title_limit is not None and word_count(row["title"]) > title_limit:
            return _mismatch(
                f"row {i + 1}: title is {word_count(row['title'])} words; limit is {title_limit}"
            )
        if forbidden and contains_long_token_run(row["title"], forbidden, REDACTION_RUN_LENGTH):
            return _mismatch(f"row {i + 1}: title reveals the reference solution")
        if expected_rows is not None:
            want = expected_rows[i]
            if row["score_text"] != str(want["score"]):
                return _mismatch(
                    f"row {i + 1}: score {row['score_text']!r} does not equal the "
                    f"evaluation score {want['score']!r}"
                )
            if row["feedback"] != want["feedback"]:
                return _mismatch(f"row {i + 1}: feedback does not echo the evaluation feedback")
    parsed = [
        {"title": r["title"], "score": int(r["score_text"]), "feedback": r["feedback"]}
        for r in rows
    ]
    return _valid(parsed)


def _validate_json_package(raw: str, contract: FormatContract) -> ValidationOutcome:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        return _mismatch(f"invalid JSON at offset {exc.pos}: {exc.msg}")
    if not isinstance(data, dict):
        return _mismatch("top-level JSON value must be an object")
    questions = data.get("questions")
    if not isinstance(questions, list) or not questions:
        return _mismatch("'questions' must be a non-empty array")

    scenario = contract.constraints.get("scenario")
    require_answers = scenario == "AllCases"
    allowed = contract.constraints.get("allowed_statements")
    expected = contract.constraints.get("expected_count")
    min_criteria = contract.constraints.get("min_criteria", 1)
    max_criteria = contract.constraints.get("max_criteria", 4)

    if expected is not None and len(questions) != expected:
        return _mismatch(f"expected exactly {expected} questions, got {len(questions)}")

    parsed: list[dict[str, Any]] = []
    seen: set[str] = set()
    for i, item in enumerate(questions):
        where = f"questions[{i}]"
        if not isinstance(item, dict):
            return _mismatch(f"{where}: must be an object")
        statement = item.get("statement")
        if not isinstance(statement, str) or not statement.strip():
            return _mismatch(f"{where}.statement: must be a non-empty string")
        if statement in seen:
            return _mismatch(f"{where}.statement: duplicate question")
        seen.add(statement)
        if allowed is not None and statement not in allowed:
            return _mismatch(
                f"{where}.statement: not among the reviewed questions (verbatim match required)"
            )
        answer = item.get("expected_answer")
        if require_answers:
            if not isinstance(answer, str) or not answer.strip():
                return _mismatch(f"{where}.expected_answer: required for the all-cases flow")
        elif scenario is not None and answer is not None:
            return _mismatch(f"{where}.expected_answer: not allowed in the some-or-none flow")
        rubric_raw = item.get("rubric")
        if not isinstance(rubric_raw, list) or not min_criteria <= len(rubric_raw) <= max_criteria:
            return _mismatch(
                f"{where}.rubric: must be an array of {min_criteria}..{max_criteria} criteria"
            )
        criteria: list[RubricCriterion] = []
        for j, crit in enumerate(rubric_raw):
            cw = f"{where}.rubric[{j}]"
            if not isinstance(crit, dict):
                return _mismatch(f"{cw}: must be an object")
            anchors = crit.get("score_anchors")
            if not isinstance(anchors, dict) or set(anchors) != {"0", "1", "2", "3"}:
                return _mismatch(f"{cw}.score_anchors: must have exactly the keys 0..3")
            if not all(isinstance(anchors[k], str) for k in anchors):
                return _mismatch(f"{cw}.score_anchors: anchors must be strings")
            if not isinstance(crit.get("description"), str):
                return _mismatch(f"{cw}.description: must be a string")
            if not isinstance(crit.get("bloom_level"), str):
                return _mismatch(f"{cw}.bloom_level: must be a string")
            try:
                criteria.append(
                    RubricCriterion(
                        description=crit["description"],
                        bloom_level=BloomLevel.from_json(crit["bloom_level"]),
                        score_anchors=tuple(anchors[str(k)] for k in range(4)),
                    )
                )
            except ValidationError as exc:
                return _mismatch(f"{cw}: {exc}")
        parsed.append(
            {
                "statement": statement,
                "expected_answer": answer if require_answers else None,
                "rubric": criteria,
            }
        )
    if allowed is not None and expected is None and len(parsed) != len(allowed):
        return _mismatch(f"expected one entry per reviewed question ({len(allowed)})")
    return _valid(parsed)


def _validate_code_block(raw: str, contract: FormatContract) -> ValidationOutcome:
    m = contract.compiled.search(raw)
    if not m:
        if not raw.lstrip().startswith("```"):
            return _mismatch("offset 0: expected an opening ``` fence")
        return _mismatch("expected exactly one fenced code block with a closing ``` line")
    code = m.group("code")
    if not code.strip():
        return _mismatch("code block is empty")
    return _valid({"code": code})


_MODE_HANDLERS: dict[str, Callable[[str, FormatContract], ValidationOutcome]] = {
    "numbered_lines": _validate_numbered_lines,
    "qa_pairs": _validate_qa_pairs,
    "rubric_blocks": _validate_rubric_blocks,
    "key_values": _validate_key_values,
    "summary_rows": _validate_summary_rows,
    "json_package": _validate_json_package,
    "code_block": _validate_code_block,
}


# ---------------------------------------------------------------------------
# Regeneration driver
# ---------------------------------------------------------------------------


class StageFormatError(Exception):
    """Every regeneration attempt mismatched; terminal for the run."""

    def __init__(
        self,
        stage: str | None,
        contract_name: str,
        attempts: int,
        diagnostics: str,
        raw_outputs: list[str],
    ):
        super().__init__(
            f"stage {stage or contract_name}: output failed the {contract_name} contract "
            f"after {attempts} attempts: {diagnostics}"
        )
        self.stage = stage
        self.contract_name = contract_name
        self.attempts = attempts
        self.diagnostics = diagnostics
        self.raw_outputs = raw_outputs


@dataclass(frozen=True)
class StageResult:
    parsed: Any
    attempts: int
    raw_outputs: tuple[str, ...]


def run_with_regeneration(
    gateway: Gateway,
    request: PromptRequest,
    contract: FormatContract,
    config: PipelineConfig,
    stage: str | None = None,
    run_id: str | None = None,
    timeout_s: float | None = None,
) -> StageResult:
    """Issue a stage request, validating and regenerating on mismatch.

    The identical prompt is re-issued (no error feedback is appended) up
    to ``config.max_regeneration_attempts`` times; every attempt is audit
    logged with its validation outcome. The optional wall-clock budget
    covers all attempts together.
    """
    deadline = time.monotonic() + timeout_s if timeout_s is not None else None
    raws: list[str] = []
    last_diagnostics = ""
    attempts = config.max_regeneration_attempts
    for attempt in range(1, attempts + 1):
        try:
            response = _complete_with_deadline(gateway, request, stage, run_id, deadline)
        except GatewayError as exc:
            exc.attempts_made = attempt  # lets stage records report partial attempts
            raise
        outcome = validate(response.text, contract)
        gateway.audit.append(
            {
                "event": "validation",
                "run_id": run_id,
                "stage": stage,
                "role": request.role.value,
                "contract": contract.name,
                "attempt": attempt,
                "status": outcome.status.value,
                "diagnostics": outcome.diagnostics,
            }
        )
        raws.append(response.text)
        if outcome.status is Status.VALID:
            return StageResult(parsed=outcome.parsed, attempts=attempt, raw_outputs=tuple(raws))
        last_diagnostics = outcome.diagnostics or ""
    raise StageFormatError(stage, contract.name, attempts, last_diagnostics, raws)


def _complete_with_deadline(
    gateway: Gateway,
    request: PromptRequest,
    stage: str | None,
    run_id: str | None,
    deadline: float | None,
) -> ProviderResponse:
    if deadline is None:
        return gateway.complete(request, stage=stage, run_id=run_id)
    remaining = deadline - time.monotonic()
    if remaining <= 0:
        raise StageTimeoutError(f"stage {stage}: wall-clock budget exhausted")
    box: list[ProviderResponse] = []
    errors: list[BaseException] = []

    def worker() -> None:
        try:
            box.append(gateway.complete(request, stage=stage, run_id=run_id))
        except BaseException as exc:  # propagated below
            errors.append(exc)

    thread = threading.Thread(target=worker, daemon=True)
    thread.start()
    thread.join(remaining)
    if thread.is_alive():
        raise StageTimeoutError(
            f"stage {stage}: provider did not answer within the stage budget"
        )
    if errors:
        raise errors[0]
    return box[0]
