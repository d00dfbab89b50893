import json

import numpy as np
import pytest

from learnprof.book import BookManifest, ChapterEntry, build_registry
from learnprof.dataset import (
    DatasetError,
    classify_readers,
    first_attempts,
    last_chapter_histogram,
    load,
    summary,
    triers_only,
)
from learnprof.quiz import ChoiceKey, Question, QuestionKind, Quiz

from conftest import build_rs

COMMIT = "b" * 40
Q1 = "7a3f2c44-9d1e-4b8a-a2f0-3c5e8d90aa01"
Q2 = "7a3f2c44-9d1e-4b8a-a2f0-3c5e8d90aa02"
Q3 = "7a3f2c44-9d1e-4b8a-a2f0-3c5e8d90aa03"
S1 = "be3e012c-65f2-4b0f-9b2a-2b0c7a1d4e01"
S2 = "be3e012c-65f2-4b0f-9b2a-2b0c7a1d4e02"


def simple_question(qid: str) -> Question:
    return Question(
        id=qid,
        kind=QuestionKind.MULTIPLE_CHOICE,
        prompt="pick",
        key=ChoiceKey("good"),
        distractors=("bad",),
    )


@pytest.fixture
def manifest() -> BookManifest:
    m = BookManifest(commit_hash=COMMIT)
    m.chapters = [ChapterEntry(1, "One", "ch01.md"), ChapterEntry(2, "Two", "ch02.md")]
    m.quizzes = {
        "alpha": (1, Quiz("alpha", (simple_question(Q1), simple_question(Q2)))),
        "beta": (2, Quiz("beta", (simple_question(Q3),))),
    }
    return m


def event(event_id, session, quiz, answers, attempt=0, received=None):
    return json.dumps({
        "eventId": event_id,
        "receivedAtMs": received if received is not None else 1000 + event_id,
        "kind": "answers",
        "body": {
            "sessionId": session,
            "quizName": quiz,
            "commitHash": COMMIT,
            "attempt": attempt,
            "clientTimestampMs": 0,
            "answers": answers,
        },
    })


def answer(qid, raw, correct):
    return {"questionId": qid, "answer": raw, "correct": correct, "durationMs": 10}


class TestLoad:
    def test_records_per_event_answer_pair(self, manifest):
        lines = [
            event(1, S1, "alpha", [answer(Q1, "good", True), answer(Q2, "bad", False),
                                   answer(Q1, "bad", False)]),
            event(2, S2, "beta", [answer(Q3, "good", True), answer(Q3, "good", True),
                                  answer(Q3, "bad", False)]),
        ]
        rs, report = load(lines, manifest)
        assert rs.n_records == 6
        assert report.records == 6
        assert report.answer_events == 2

    def test_empty_export(self, manifest):
        rs, report = load([], manifest)
        assert rs.n_records == 0
        assert report.lines == 0

    def test_regrade_overrides_client_flag(self, manifest):
        registry = build_registry([manifest])
        # Client claims correct, but the raw answer is a distractor.
        lines = [event(1, S1, "alpha", [answer(Q1, "bad", True)])]
        rs, report = load(lines, manifest, registry)
        assert rs.score.tolist() == [0]
        assert report.regraded == 1
        assert report.client_flag_fallback == 0

    def test_unknown_commit_falls_back_to_client_flag(self, manifest):
        registry = {}
        lines = [event(1, S1, "alpha", [answer(Q1, "bad", True)])]
        rs, report = load(lines, manifest, registry)
        assert rs.score.tolist() == [1]
        assert report.client_flag_fallback == 1

    def test_unknown_quiz_dropped_and_counted(self, manifest):
        lines = [event(1, S1, "gamma", [answer(Q1, "good", True)])]
        rs, report = load(lines, manifest)
        assert rs.n_records == 0
        assert report.unknown_quizzes == {"gamma"}
        assert report.unknown_quiz_records == 1

    def test_skip_rate_above_threshold_fails(self, manifest):
        lines = ["not json"] * 2 + [event(1, S1, "alpha", [answer(Q1, "good", True)])]
        with pytest.raises(DatasetError, match="unreadable"):
            load(lines, manifest)

    def test_chapter_resolved_from_manifest(self, manifest):
        lines = [event(1, S1, "beta", [answer(Q3, "good", True)])]
        rs, _ = load(lines, manifest)
        assert rs.question_chapters[rs.question_index[Q3]] == 2


class TestFirstAttempts:
    def test_drops_later_attempts(self):
        rs = build_rs([
            (S1, Q1, 1, 0, 100),
            (S1, Q1, 0, 1, 200),  # attempt 1, dropped
            (S1, Q2, 1, 0, 300),
        ])
        fa = first_attempts(rs)
        assert fa.n_records == 2
        assert fa.attempt.tolist() == [0, 0]

    def test_identity_when_already_filtered(self):
        rs = build_rs([(S1, Q1, 1, 0, 100), (S2, Q1, 0, 0, 50)])
        fa = first_attempts(rs)
        assert fa.n_records == 2
        again = first_attempts(fa)
        assert again.n_records == 2
        assert np.array_equal(again.received_at_ms, fa.received_at_ms)

    def test_rereads_keep_earliest(self):
        rs = build_rs([
            (S1, Q1, 0, 0, 500),
            (S1, Q1, 1, 0, 100),  # same question answered on an earlier visit
        ])
        fa = first_attempts(rs)
        assert fa.n_records == 1
        assert fa.received_at_ms.tolist() == [100]
        assert fa.score.tolist() == [1]


class TestClassify:
    def test_lower_median_threshold(self):
        records = []
        for i, count in enumerate([2, 6, 10]):
            for q in range(count):
                records.append((f"s{i}", f"q{q}", 1, 0, i * 100 + q))
        rs = build_rs(records)
        threshold, profiles = classify_readers(rs)
        assert threshold == 6
        classes = {p.session_id: p.reader_class for p in profiles.values()}
        assert classes == {"s0": "dabbler", "s1": "trier", "s2": "trier"}

    def test_single_reader_is_trier(self):
        rs = build_rs([(S1, Q1, 1)])
        threshold, profiles = classify_readers(rs)
        assert threshold == 1
        assert profiles[S1].reader_class == "trier"

    def test_counts_distinct_questions(self):
        rs = build_rs([(S1, Q1, 1, 0, 0), (S1, Q1, 0, 0, 1), (S2, Q1, 1), (S2, Q2, 1)])
        _, profiles = classify_readers(rs)
        assert profiles[S1].questions_answered == 1
        assert profiles[S2].questions_answered == 2

    def test_invariant_under_record_permutation(self):
        records = [(f"s{i % 5}", f"q{j}", (i + j) % 2, 0, i * 17 + j)
                   for i in range(10) for j in range(i + 1)]
        rs = build_rs(records)
        rng = np.random.default_rng(3)
        shuffled = [records[i] for i in rng.permutation(len(records))]
        rs2 = build_rs(shuffled)
        t1, p1 = classify_readers(rs)
        t2, p2 = classify_readers(rs2)
        assert t1 == t2
        assert {s: p.reader_class for s, p in p1.items()} == {
            s: p.reader_class for s, p in p2.items()}

    def test_partition_is_total(self):
        rs = build_rs([(f"s{i}", f"q{j}", 1, 0, i * 10 + j)
                       for i in range(7) for j in range(i + 1)])
        _, profiles = classify_readers(rs)
        triers = sum(p.reader_class == "trier" for p in profiles.values())
        dabblers = sum(p.reader_class == "dabbler" for p in profiles.values())
        assert triers + dabblers == len(profiles) == 7


class TestLastChapter:
    def test_all_end_in_chapter_one(self):
        rs = build_rs([(S1, Q1, 1), (S2, Q1, 0)])
        assert last_chapter_histogram(rs) == {1: 1.0}

    def test_hand_counted_fractions(self):
        chapters = {"q1": 1, "q4": 4}
        rs = build_rs([
            ("s1", "q1", 1, 0, 10),
            ("s2", "q1", 1, 0, 10),
            ("s3", "q1", 1, 0, 10), ("s3", "q4", 1, 0, 20),
        ], question_chapters=chapters)
        hist = last_chapter_histogram(rs)
        assert hist == {1: 2 / 3, 4: 1 / 3}

    def test_fractions_sum_to_one(self):
        rng = np.random.default_rng(11)
        chapters = {f"q{j}": j % 5 + 1 for j in range(20)}
        records = [(f"s{i}", f"q{rng.integers(20)}", 1, 0, int(rng.integers(1000)))
                   for i in range(30) for _ in range(3)]
        rs = build_rs(records, question_chapters=chapters)
        hist = last_chapter_histogram(rs)
        assert abs(sum(hist.values()) - 1.0) < 1e-9
        assert all(f >= 0 for f in hist.values())

    def test_timestamp_tie_goes_to_higher_chapter(self):
        chapters = {"q1": 1, "q2": 2}
        rs = build_rs([("s1", "q1", 1, 0, 100), ("s1", "q2", 1, 0, 100)],
                      question_chapters=chapters)
        _, profiles = classify_readers(rs)
        assert profiles["s1"].last_chapter == 2

    def test_class_filter(self):
        # Counts [1, 3, 3]: lower median 3, so the one-question reader is a
        # dabbler.
        chapters = {"q0": 1, "q1": 1, "q2": 2}
        rs = build_rs([
            ("dab", "q0", 1, 0, 5),
            ("tri", "q0", 1, 0, 1), ("tri", "q1", 1, 0, 2), ("tri", "q2", 1, 0, 3),
            ("tri2", "q0", 1, 0, 1), ("tri2", "q1", 1, 0, 2), ("tri2", "q2", 1, 0, 3),
        ], question_chapters=chapters)
        assert last_chapter_histogram(rs, "trier") == {2: 1.0}
        assert last_chapter_histogram(rs, "dabbler") == {1: 1.0}


def test_triers_only_restricts_records():
    records = [("dab", "q0", 1, 0, 5)]
    records += [("tri", f"q{j}", 1, 0, j) for j in range(4)]
    records += [("tri2", f"q{j}", 1, 0, 10 + j) for j in range(4)]
    rs = build_rs(records)
    trier_rs, threshold, profiles = triers_only(rs)
    assert threshold == 4
    assert trier_rs.n_records == 8
    assert rs.session_index["dab"] not in set(trier_rs.session_idx.tolist())


def test_summary_counts():
    rs = build_rs([("a", "q1", 1), ("a", "q2", 0), ("b", "q1", 1)])
    out = summary(rs)
    assert out["readers"] == 2
    assert out["records"] == 3
    assert out["triers"] + out["dabblers"] == 2
