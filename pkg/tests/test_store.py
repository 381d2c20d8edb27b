"""Persistence: append-only logs, replay, atomic package files."""

from __future__ import annotations

import json

import pytest

from helpers import Rig, make_bundle, make_rig
from cpreflect.assessment import SummaryRow, SummaryReport, render_summary_html
from cpreflect.domain import AnswerEvaluation, QuestionRating, Verdict, utc_now
from cpreflect.store import PackageStore, SessionStore, Step, StorageError, atomic_write_text


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out" / "file.json"
    atomic_write_text(target, "{}\n")
    assert target.read_text() == "{}\n"
    assert list(target.parent.glob(".*.tmp")) == []


def test_package_store_round_trip(rig: Rig, tmp_path):
    store = PackageStore(tmp_path)
    package = rig.pipeline.run_all_cases(make_bundle())
    bundle_hash = make_bundle().content_hash
    assert store.load(bundle_hash) is None
    store.save(bundle_hash, package)
    assert store.load(bundle_hash) == package
    assert store.hashes() == [bundle_hash]


def make_report(session_id: str = "s") -> SummaryReport:
    rows = [SummaryRow("Bounds check", 2, "mind the edges")]
    return SummaryReport(rows=tuple(rows), html=render_summary_html(rows), session_id=session_id)


def test_session_store_replay_round_trip(tmp_path):
    store = SessionStore(tmp_path)
    state = store.create_session()
    sid = state.session_id
    store.record_artifacts(sid, "problem text", "print(1)", "a.py")
    store.record_verdict(sid, Verdict.WRONG_ANSWER)
    store.record_package_ready(sid, state.bundle.content_hash if state.bundle else "h" * 8)
    evaluation = AnswerEvaluation("q1", "my answer", 2, "closer than you think", 50)
    store.record_answer(sid, evaluation)
    report = make_report(sid)
    store.record_summary(sid, report)

    reopened = SessionStore(tmp_path)
    replayed = reopened.get_session(sid)
    assert replayed is not None
    assert replayed.step is Step.SUMMARIZED
    assert replayed.problem_statement == "problem text"
    assert replayed.bundle is not None
    assert replayed.bundle.verdict is Verdict.WRONG_ANSWER
    assert replayed.answered["q1"] == evaluation
    assert replayed.summary == report
    assert replayed.summary_json == store.get_session(sid).summary_json


def test_answer_order_preserved_through_replay(tmp_path):
    store = SessionStore(tmp_path)
    sid = store.create_session().session_id
    store.record_artifacts(sid, "p", "c", "f.py")
    store.record_verdict(sid, Verdict.ALL_PASSED)
    store.record_package_ready(sid, "ref")
    for qid in ("q3", "q1", "q2"):
        store.record_answer(sid, AnswerEvaluation(qid, "a", 1, "hint", 20))
    reopened = SessionStore(tmp_path)
    assert list(reopened.get_session(sid).answered) == ["q3", "q1", "q2"]


def test_torn_tail_line_is_ignored(tmp_path):
    store = SessionStore(tmp_path)
    sid = store.create_session().session_id
    store.record_artifacts(sid, "p", "c", "f.py")
    with open(store.events_path, "a", encoding="utf-8") as fh:
        fh.write('{"event": "verdict_declared", "session_id": "' + sid)  # torn write
    reopened = SessionStore(tmp_path)
    assert reopened.get_session(sid).step is Step.ARTIFACTS_UPLOADED


def test_draft_answers_replay(tmp_path):
    store = SessionStore(tmp_path)
    sid = store.create_session().session_id
    store.record_artifacts(sid, "p", "c", "f.py")
    store.record_verdict(sid, Verdict.ALL_PASSED)
    store.record_package_ready(sid, "ref")
    store.record_answer_draft(sid, "q9", "half-finished thought")
    reopened = SessionStore(tmp_path)
    assert reopened.get_session(sid).drafts == {"q9": "half-finished thought"}
    # completing the answer clears the draft
    store.record_answer(sid, AnswerEvaluation("q9", "done", 3, "nice", 20))
    assert store.get_session(sid).drafts == {}


def test_rating_aggregation(tmp_path):
    store = SessionStore(tmp_path)
    store.record_rating(QuestionRating("q1", 3, utc_now()))
    store.record_rating(QuestionRating("q1", 5, utc_now()))
    assert store.rating_mean("q1") == 4.0
    assert store.rating_mean("unrated") is None


def test_rating_latest_per_session_wins(tmp_path):
    store = SessionStore(tmp_path)
    store.record_rating(QuestionRating("q1", 2, utc_now()), session_id="sA")
    store.record_rating(QuestionRating("q1", 4, utc_now()), session_id="sA")
    store.record_rating(QuestionRating("q1", 4, utc_now()), session_id="sB")
    assert store.rating_mean("q1") == 4.0
    assert len(store.ratings_for("q1")) == 3


def test_corrupt_package_file_raises_storage_error(tmp_path):
    store = PackageStore(tmp_path)
    (tmp_path / ("a" * 64 + ".json")).write_text("{not json", "utf-8")
    with pytest.raises(StorageError, match="unreadable"):
        store.load("a" * 64)


def test_replay_never_reapplies_upload_limits(tmp_path):
    # a deployment with a raised limit accepted a large upload; replay with
    # default limits must still reconstruct the session
    store = SessionStore(tmp_path)
    sid = store.create_session().session_id
    big_code = "x = 1\n" * 20000  # > 64 KiB
    store.record_artifacts(sid, "p", big_code, "big.py")
    store.record_verdict(sid, Verdict.ALL_PASSED)
    reopened = SessionStore(tmp_path)
    state = reopened.get_session(sid)
    assert state.step is Step.CONFIGURED
    assert state.bundle is not None


def test_events_are_valid_jsonl(tmp_path):
    store = SessionStore(tmp_path)
    sid = store.create_session().session_id
    store.record_artifacts(sid, "p", "c", "f.py")
    lines = store.events_path.read_text().strip().splitlines()
    assert len(lines) == 2
    for line in lines:
        record = json.loads(line)
        assert "event" in record and "at" in record
