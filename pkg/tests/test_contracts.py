"""Format contracts: grammar checks, semantic bounds, regeneration."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from helpers import (
    ContractCase,
    answers_for,
    contract_cases,
    feedback_text,
    packaged_json_text,
    qa_text,
    question_list_text,
    reference_block_text,
    rubric_block_text,
    statements,
    summary_rows_text,
)
from cpreflect.audit import AuditLog
from cpreflect.contracts import (
    FormatContract,
    StageFormatError,
    Status,
    load_contracts,
    run_with_regeneration,
    validate,
)
from cpreflect.domain import PipelineConfig, RubricCriterion, ValidationError
from cpreflect.gateway import ClientRole, Gateway, MockProvider, PromptRequest

CONTRACTS = load_contracts()


def any_request(role: ClientRole = ClientRole.GENERATOR) -> PromptRequest:
    return PromptRequest(
        role=role,
        persona="Professor",
        sections=(("problem", "P"),),
        instruction="Answer in the stated format.",
        temperature=0.2,
    )


# -- registry -------------------------------------------------------------------


def test_registry_ships_all_contracts():
    assert CONTRACTS.version == 1
    assert len(CONTRACTS.names()) >= 6
    for name in CONTRACTS.names():
        contract = CONTRACTS[name]
        assert contract.description.strip()
        contract.compiled  # compiles


def test_parse_spec_groups_must_exist():
    with pytest.raises(ValidationError, match="parse_spec"):
        FormatContract(
            name="broken",
            mode="key_values",
            pattern=r"\AX\Z",
            parse_spec={"missing": "field"},
            description="d",
        )


def test_unknown_contract_name():
    with pytest.raises(ValidationError, match="unknown contract"):
        CONTRACTS["nope"]


# -- per-contract good/bad samples ------------------------------------------------


@pytest.mark.parametrize("case", contract_cases(CONTRACTS), ids=lambda c: c.name)
def test_good_sample_is_valid(case: ContractCase):
    outcome = validate(case.good, case.contract)
    assert outcome.status is Status.VALID, outcome.diagnostics
    assert outcome.parsed is not None and outcome.diagnostics is None


@pytest.mark.parametrize("case", contract_cases(CONTRACTS), ids=lambda c: c.name)
def test_bad_sample_is_mismatch(case: ContractCase):
    outcome = validate(case.bad, case.contract)
    assert outcome.status is Status.MISMATCH
    assert outcome.parsed is None and outcome.diagnostics


# -- feedback specifics ---------------------------------------------------------------


def test_feedback_example_parses():
    outcome = validate(
        "SCORE: 2\nHINT: check loop bounds", CONTRACTS["feedback"].bind(word_limit=20)
    )
    assert outcome.parsed == {"score": 2, "hint": "check loop bounds"}


def test_feedback_mismatch_has_position():
    outcome = validate("score two, hint none", CONTRACTS["feedback"])
    assert outcome.status is Status.MISMATCH
    assert "line 1" in outcome.diagnostics


def test_feedback_out_of_range_score_is_mismatch():
    for score in (-1, 4, 7):
        outcome = validate(f"SCORE: {score}\nHINT: fine", CONTRACTS["feedback"])
        assert outcome.status is Status.MISMATCH
        assert "outside [0, 3]" in outcome.diagnostics


def test_feedback_word_limit_is_semantic_mismatch():
    long_hint = " ".join(["word"] * 25)
    outcome = validate(feedback_text(2, long_hint), CONTRACTS["feedback"].bind(word_limit=20))
    assert outcome.status is Status.MISMATCH
    assert "25 words" in outcome.diagnostics


def test_feedback_redaction_is_semantic_mismatch():
    source = "alpha beta gamma delta epsilon zeta eta theta iota kappa lam mu"
    leaking = "SCORE: 1\nHINT: alpha beta gamma delta epsilon zeta eta theta iota kappa"
    contract = CONTRACTS["feedback"].bind(word_limit=50, forbidden_text=source)
    outcome = validate(leaking, contract)
    assert outcome.status is Status.MISMATCH
    assert "reference solution" in outcome.diagnostics


# -- question list specifics -------------------------------------------------------------


def test_question_list_counts_enforced():
    contract = CONTRACTS["question_list"].bind(expected_count=10)
    eleven = question_list_text(statements(11))
    outcome = validate(eleven, contract)
    assert outcome.status is Status.MISMATCH
    assert "expected exactly 10 items, got 11" in outcome.diagnostics


def test_question_list_numbering_must_be_sequential():
    text = "1. First question here\n3. Skipped a number"
    outcome = validate(text, CONTRACTS["question_list"])
    assert outcome.status is Status.MISMATCH
    assert "item number 2" in outcome.diagnostics


def test_question_list_duplicates_rejected():
    text = "1. Same question\n2. Same question"
    outcome = validate(text, CONTRACTS["question_list"])
    assert outcome.status is Status.MISMATCH


def test_question_list_diagnostics_name_first_bad_line():
    text = "1. Fine question here\nnot a numbered line\n3. Another"
    outcome = validate(text, CONTRACTS["question_list"])
    assert "line 2" in outcome.diagnostics


# -- rubric specifics ------------------------------------------------------------------------


def test_rubric_parses_to_domain_criteria():
    outcome = validate(rubric_block_text(2, criteria_per_question=2), CONTRACTS["rubric"])
    assert outcome.status is Status.VALID
    assert len(outcome.parsed) == 2
    assert all(isinstance(c, RubricCriterion) for block in outcome.parsed for c in block)


def test_rubric_unknown_bloom_level_rejected():
    text = (
        "QUESTION 1:\n"
        "CRITERION: depth\n"
        "LEVEL: Evaluate\n"
        "ANCHOR 0: a\nANCHOR 1: b\nANCHOR 2: c\nANCHOR 3: d"
    )
    outcome = validate(text, CONTRACTS["rubric"])
    assert outcome.status is Status.MISMATCH
    assert "Evaluate" in outcome.diagnostics


def test_rubric_criteria_count_bounds():
    five = rubric_block_text(1, criteria_per_question=5)
    outcome = validate(five, CONTRACTS["rubric"])
    assert outcome.status is Status.MISMATCH
    assert "criteria outside" in outcome.diagnostics


# -- summary specifics ---------------------------------------------------------------------------


def summary_contract(rows):
    return CONTRACTS["summary"].bind(
        title_word_limit=5,
        expected_rows=[{"score": s, "feedback": f} for _t, s, f in rows],
    )


def test_summary_echo_required():
    rows = [("Bounds check", 2, "watch the bounds")]
    contract = summary_contract(rows)
    assert validate(summary_rows_text(rows), contract).status is Status.VALID
    tampered_score = [("Bounds check", 3, "watch the bounds")]
    outcome = validate(summary_rows_text(tampered_score), contract)
    assert outcome.status is Status.MISMATCH and "score" in outcome.diagnostics
    tampered_feedback = [("Bounds check", 2, "rewritten feedback")]
    outcome = validate(summary_rows_text(tampered_feedback), contract)
    assert outcome.status is Status.MISMATCH and "echo" in outcome.diagnostics


def test_summary_title_word_limit():
    rows = [("one two three four five six", 2, "fb")]
    outcome = validate(summary_rows_text(rows), summary_contract(rows))
    assert outcome.status is Status.MISMATCH
    assert "title" in outcome.diagnostics


def test_summary_title_redaction():
    source = "alpha beta gamma delta epsilon zeta eta theta iota kappa lam mu"
    leaky_title = "alpha beta gamma delta epsilon zeta eta theta iota kappa"
    contract = CONTRACTS["summary"].bind(
        title_word_limit=50,
        expected_rows=[{"score": 2, "feedback": "fb"}],
        forbidden_text=source,
    )
    outcome = validate(f"{leaky_title} | 2 | fb", contract)
    assert outcome.status is Status.MISMATCH
    assert "reference solution" in outcome.diagnostics


# -- packaged json specifics -----------------------------------------------------------------------


def test_packaged_json_containment():
    allowed = statements(2)
    contract = CONTRACTS["packaged_json"].bind(
        scenario="AllCases", expected_count=2, allowed_statements=allowed
    )
    good = packaged_json_text(allowed, answers_for(allowed))
    assert validate(good, contract).status is Status.VALID
    invented = packaged_json_text(
        [allowed[0], "A question the formatter made up?"], answers_for(allowed)
    )
    outcome = validate(invented, contract)
    assert outcome.status is Status.MISMATCH
    assert "verbatim" in outcome.diagnostics


def test_packaged_json_scenario_rules():
    items = statements(1)
    with_answer = packaged_json_text(items, ["an answer"])
    without = packaged_json_text(items)
    all_cases = CONTRACTS["packaged_json"].bind(
        scenario="AllCases", expected_count=1, allowed_statements=items
    )
    some = CONTRACTS["packaged_json"].bind(
        scenario="SomeOrNone", expected_count=1, allowed_statements=items
    )
    assert validate(with_answer, all_cases).status is Status.VALID
    assert validate(without, all_cases).status is Status.MISMATCH
    assert validate(without, some).status is Status.VALID
    assert validate(with_answer, some).status is Status.MISMATCH


def test_packaged_json_invalid_json_positions():
    outcome = validate("{\"questions\": [", CONTRACTS["packaged_json"])
    assert outcome.status is Status.MISMATCH
    assert "offset" in outcome.diagnostics


# -- fuzz: validation is total ----------------------------------------------------------------------


@settings(max_examples=1000, deadline=None)
@given(st.text(max_size=300))
def test_validate_never_raises_on_random_text(raw):
    for case in contract_cases(CONTRACTS):
        outcome = validate(raw, case.contract)
        assert outcome.status in (Status.VALID, Status.MISMATCH)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.text(
            alphabet=st.characters(blacklist_categories=("Cs", "Cc"), blacklist_characters="|"),
            min_size=1,
            max_size=40,
        ).filter(lambda s: s.strip()),
        min_size=1,
        max_size=8,
        unique_by=lambda s: s.strip(),
    )
)
def test_question_list_valid_reparse_round_trip(texts):
    texts = [" ".join(t.split()) for t in texts]
    if len(set(texts)) != len(texts) or not all(texts):
        return
    contract = CONTRACTS["question_list"]
    raw = question_list_text(texts)
    outcome = validate(raw, contract)
    if outcome.status is Status.VALID:
        again = validate(question_list_text(outcome.parsed), contract)
        assert again.status is Status.VALID
        assert again.parsed == outcome.parsed


# -- regeneration driver ------------------------------------------------------------------------------


def regen_gateway(scripted) -> tuple[Gateway, MockProvider, AuditLog]:
    provider = MockProvider()
    provider.script_role(ClientRole.GENERATOR, scripted)
    audit = AuditLog()
    return Gateway(provider, audit), provider, audit


def test_bad_then_good_takes_two_attempts():
    contract = CONTRACTS["feedback"].bind(word_limit=20)
    gateway, _provider, audit = regen_gateway(["score two, hint none", feedback_text()])
    result = run_with_regeneration(
        gateway, any_request(), contract, PipelineConfig(), stage="feedback"
    )
    assert result.attempts == 2
    assert result.parsed["score"] == 2
    validations = audit.records("validation")
    assert [v["status"] for v in validations] == ["Mismatch", "Valid"]


def test_good_first_takes_one_attempt():
    contract = CONTRACTS["feedback"].bind(word_limit=20)
    gateway, _provider, _audit = regen_gateway([feedback_text()])
    result = run_with_regeneration(gateway, any_request(), contract, PipelineConfig())
    assert result.attempts == 1


def test_exhaustion_raises_stage_format_error():
    contract = CONTRACTS["feedback"].bind(word_limit=20)
    gateway, provider, audit = regen_gateway(["bad one", "bad two", "never reached"])
    with pytest.raises(StageFormatError) as err:
        run_with_regeneration(
            gateway, any_request(), contract, PipelineConfig(), stage="feedback"
        )
    assert err.value.attempts == 2
    assert err.value.raw_outputs == ["bad one", "bad two"]
    assert provider.call_count == 2
    assert len(audit.records("validation")) == 2


@pytest.mark.parametrize("max_attempts", [1, 2, 4])
def test_attempt_count_never_exceeds_budget(max_attempts):
    contract = CONTRACTS["feedback"].bind(word_limit=20)
    gateway, provider, _audit = regen_gateway(["bad"] * 10)
    config = PipelineConfig(max_regeneration_attempts=max_attempts)
    with pytest.raises(StageFormatError):
        run_with_regeneration(gateway, any_request(), contract, config)
    assert provider.call_count == max_attempts


def test_regeneration_reissues_identical_prompt():
    contract = CONTRACTS["feedback"].bind(word_limit=20)
    gateway, provider, _audit = regen_gateway(["bad", feedback_text()])
    run_with_regeneration(gateway, any_request(), contract, PipelineConfig())
    digests = {call["prompt_sha256"] for call in provider.calls}
    assert len(digests) == 1  # no error-feedback augmentation


# -- loading from an explicit path --------------------------------------------------------------------


def test_contracts_load_from_file(tmp_path):
    path = tmp_path / "copy.json"
    path.write_text(
        json.dumps(
            {
                "version": 7,
                "contracts": [
                    {
                        "name": "feedback",
                        "mode": "key_values",
                        "pattern": CONTRACTS["feedback"].pattern,
                        "parse_spec": CONTRACTS["feedback"].parse_spec,
                        "description": "d",
                    }
                ],
            }
        ),
        "utf-8",
    )
    registry = load_contracts(path)
    assert registry.version == 7
    assert registry.names() == ["feedback"]
