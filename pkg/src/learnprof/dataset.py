"""Analysis-ready response data: regrading, attempt filtering, reader
classification, and drop-off analysis.

A ResponseSet is a column-oriented table of graded answer records plus the
session/question/quiz indexes they point into. It is immutable by
convention: every operation returns a new ResponseSet sharing the indexes.
Scores come from regrading raw answers against the versioned quiz registry
where possible; the client-reported flag is only a fallback for content
versions the registry does not know.
"""

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from .book import BookManifest
from .quiz import GradeError, Question, grade, submission_from_json
from .telemetry import KIND_ANSWERS


class DatasetError(Exception):
    pass


class UnknownReaderError(DatasetError):
    pass


class UnknownQuestionError(DatasetError):
    pass


@dataclass(frozen=True)
class ReaderProfile:
    session_id: str
    questions_answered: int
    mean_score: float
    last_chapter: int
    reader_class: str  # "trier" | "dabbler"


@dataclass
class LoadReport:
    lines: int = 0
    skipped_lines: int = 0
    answer_events: int = 0
    records: int = 0
    unknown_quiz_records: int = 0
    unknown_quizzes: set[str] = field(default_factory=set)
    regraded: int = 0
    client_flag_fallback: int = 0
    malformed_answers: int = 0

    def to_dict(self) -> dict:
        return {
            "lines": self.lines,
            "skippedLines": self.skipped_lines,
            "answerEvents": self.answer_events,
            "records": self.records,
            "unknownQuizRecords": self.unknown_quiz_records,
            "unknownQuizzes": sorted(self.unknown_quizzes),
            "regraded": self.regraded,
            "clientFlagFallback": self.client_flag_fallback,
            "malformedAnswers": self.malformed_answers,
        }


@dataclass
class ResponseSet:
    sessions: list[str]
    questions: list[str]
    question_chapters: np.ndarray  # chapter per question index
    quizzes: list[str]
    session_idx: np.ndarray
    question_idx: np.ndarray
    quiz_idx: np.ndarray
    attempt: np.ndarray
    received_at_ms: np.ndarray
    score: np.ndarray
    duration_ms: np.ndarray
    normalized_answers: list[str] | None = None

    @property
    def n_records(self) -> int:
        return len(self.session_idx)

    @cached_property
    def session_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.sessions)}

    @cached_property
    def question_index(self) -> dict[str, int]:
        return {q: i for i, q in enumerate(self.questions)}

    @cached_property
    def chapters(self) -> np.ndarray:
        """Sorted distinct chapters of the question universe."""
        return np.unique(self.question_chapters)

    @cached_property
    def present_readers(self) -> np.ndarray:
        """Session indexes having at least one record, sorted."""
        return np.unique(self.session_idx)

    @cached_property
    def _reader_slices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # Record order grouped by reader, with [start, end) per session index.
        order = np.argsort(self.session_idx, kind="stable")
        counts = np.bincount(self.session_idx, minlength=len(self.sessions))
        ends = np.cumsum(counts)
        starts = ends - counts
        return order, starts, ends

    def take(self, record_indices: np.ndarray) -> "ResponseSet":
        """A new ResponseSet with the given records, indexes unchanged."""
        idx = np.asarray(record_indices)
        return replace(
            self,
            session_idx=self.session_idx[idx],
            question_idx=self.question_idx[idx],
            quiz_idx=self.quiz_idx[idx],
            attempt=self.attempt[idx],
            received_at_ms=self.received_at_ms[idx],
            score=self.score[idx],
            duration_ms=self.duration_ms[idx],
            normalized_answers=(
                [self.normalized_answers[i] for i in idx] if self.normalized_answers is not None else None
            ),
        )

    def restrict_to_readers(self, session_indices: np.ndarray) -> "ResponseSet":
        """Keep only records by the given readers (canonical record order)."""
        order, starts, ends = self._reader_slices
        sel = np.asarray(session_indices)
        lens = ends[sel] - starts[sel]
        total = int(lens.sum())
        if total == 0:
            return self.take(np.empty(0, dtype=np.int64))
        offsets = np.repeat(np.cumsum(lens) - lens, lens)
        flat = np.repeat(starts[sel], lens) + (np.arange(total) - offsets)
        rec = np.sort(order[flat])
        return self.take(rec)


def _empty_response_set() -> ResponseSet:
    return ResponseSet(
        sessions=[],
        questions=[],
        question_chapters=np.empty(0, dtype=np.int64),
        quizzes=[],
        session_idx=np.empty(0, dtype=np.int64),
        question_idx=np.empty(0, dtype=np.int64),
        quiz_idx=np.empty(0, dtype=np.int64),
        attempt=np.empty(0, dtype=np.int64),
        received_at_ms=np.empty(0, dtype=np.int64),
        score=np.empty(0, dtype=np.int64),
        duration_ms=np.empty(0, dtype=np.int64),
    )


def load(
    export: str | Path | Iterable[str],
    manifest: BookManifest,
    registry: dict[tuple[str, str], Question] | None = None,
    keep_answers: bool = False,
    max_skip_rate: float = 0.01,
) -> tuple[ResponseSet, LoadReport]:
    """Turn an NDJSON telemetry export into a ResponseSet.

    One record is produced per (answer event, answer). Records are regraded
    from the raw answer when the registry knows (commitHash, questionId);
    otherwise the client-graded flag is used and counted in the report.
    Events for quizzes the manifest does not know are dropped and counted.
    Unreadable lines are skipped; above ``max_skip_rate`` the load fails.
    """
    if isinstance(export, (str, Path)):
        lines: Iterable[str] = Path(export).read_text(encoding="utf-8").splitlines()
    else:
        lines = export
    registry = registry or {}

    report = LoadReport()
    sessions: list[str] = []
    session_index: dict[str, int] = {}
    questions: list[str] = []
    question_index: dict[str, int] = {}
    chapters: list[int] = []
    quizzes: list[str] = []
    quiz_index: dict[str, int] = {}

    cols: dict[str, list] = {k: [] for k in ("s", "q", "z", "a", "t", "y", "d")}
    answers_norm: list[str] | None = [] if keep_answers else None

    for line in lines:
        line = line.strip()
        if not line:
            continue
        report.lines += 1
        try:
            event = json.loads(line)
            if event.get("kind") != KIND_ANSWERS:
                continue
            body = event["body"]
            received = int(event["receivedAtMs"])
            quiz_name = body["quizName"]
            session_id = body["sessionId"]
            commit = body["commitHash"]
            attempt = int(body["attempt"])
            answers = body["answers"]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            report.skipped_lines += 1
            continue

        report.answer_events += 1
        if quiz_name not in manifest.quizzes:
            report.unknown_quizzes.add(quiz_name)
            report.unknown_quiz_records += len(answers)
            continue
        chapter = manifest.quizzes[quiz_name][0]

        if session_id not in session_index:
            session_index[session_id] = len(sessions)
            sessions.append(session_id)
        if quiz_name not in quiz_index:
            quiz_index[quiz_name] = len(quizzes)
            quizzes.append(quiz_name)

        for answer in answers:
            try:
                qid = answer["questionId"]
                raw = answer["answer"]
                client_correct = bool(answer["correct"])
                duration = int(answer.get("durationMs", 0))
            except (KeyError, TypeError, ValueError):
                report.skipped_lines += 1
                continue

            question = registry.get((commit, qid))
            normalized = None
            if question is not None:
                try:
                    graded = grade(question, submission_from_json(question.kind, raw))
                    score, normalized = graded.score, graded.normalized
                    report.regraded += 1
                except GradeError:
                    score = int(client_correct)
                    report.malformed_answers += 1
            else:
                score = int(client_correct)
                report.client_flag_fallback += 1

            if qid not in question_index:
                question_index[qid] = len(questions)
                questions.append(qid)
                chapters.append(chapter)

            cols["s"].append(session_index[session_id])
            cols["q"].append(question_index[qid])
            cols["z"].append(quiz_index[quiz_name])
            cols["a"].append(attempt)
            cols["t"].append(received)
            cols["y"].append(score)
            cols["d"].append(duration)
            if answers_norm is not None:
                answers_norm.append(normalized if normalized is not None else json.dumps(raw, sort_keys=True))
            report.records += 1

    if report.lines and report.skipped_lines / report.lines > max_skip_rate:
        raise DatasetError(
            f"{report.skipped_lines}/{report.lines} export lines unreadable "
            f"(above the {max_skip_rate:.0%} threshold)")

    rs = ResponseSet(
        sessions=sessions,
        questions=questions,
        question_chapters=np.asarray(chapters, dtype=np.int64),
        quizzes=quizzes,
        session_idx=np.asarray(cols["s"], dtype=np.int64),
        question_idx=np.asarray(cols["q"], dtype=np.int64),
        quiz_idx=np.asarray(cols["z"], dtype=np.int64),
        attempt=np.asarray(cols["a"], dtype=np.int64),
        received_at_ms=np.asarray(cols["t"], dtype=np.int64),
        score=np.asarray(cols["y"], dtype=np.int64),
        duration_ms=np.asarray(cols["d"], dtype=np.int64),
        normalized_answers=answers_norm,
    )
    return rs, report


def first_attempts(rs: ResponseSet) -> ResponseSet:
    """Keep only attempt-0 records; when a reader still has several records
    for one question (re-reads), keep the earliest by receivedAtMs.
    Idempotent."""
    mask = rs.attempt == 0
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return rs.take(idx)
    s = rs.session_idx[idx]
    q = rs.question_idx[idx]
    t = rs.received_at_ms[idx]
    # Sort by (reader, question, time, original order); keep group heads.
    order = np.lexsort((idx, t, q, s))
    s_sorted, q_sorted = s[order], q[order]
    head = np.ones(len(order), dtype=bool)
    head[1:] = (s_sorted[1:] != s_sorted[:-1]) | (q_sorted[1:] != q_sorted[:-1])
    return rs.take(np.sort(idx[order[head]]))


def classify_readers(rs: ResponseSet) -> tuple[int, dict[str, ReaderProfile]]:
    """Split readers into triers and dabblers at the median question count.

    The threshold is the (lower) median number of distinct questions answered
    per reader; a trier answered at least that many. Invariant under record
    order permutation.
    """
    if rs.n_records == 0:
        raise DatasetError("cannot classify readers of an empty response set")

    pair_ids = rs.session_idx * len(rs.questions) + rs.question_idx
    unique_pairs = np.unique(pair_ids)
    counts = np.bincount(unique_pairs // len(rs.questions), minlength=len(rs.sessions))

    present = rs.present_readers
    sorted_counts = np.sort(counts[present])
    threshold = int(sorted_counts[(len(sorted_counts) - 1) // 2])

    sums = np.bincount(rs.session_idx, weights=rs.score, minlength=len(rs.sessions))
    totals = np.bincount(rs.session_idx, minlength=len(rs.sessions))
    last = _last_chapter_per_reader(rs)

    profiles: dict[str, ReaderProfile] = {}
    for i in present:
        n_questions = int(counts[i])
        profiles[rs.sessions[i]] = ReaderProfile(
            session_id=rs.sessions[i],
            questions_answered=n_questions,
            mean_score=float(sums[i] / totals[i]),
            last_chapter=int(last[i]),
            reader_class="trier" if n_questions >= threshold else "dabbler",
        )
    return threshold, profiles


def _last_chapter_per_reader(rs: ResponseSet) -> np.ndarray:
    """Chapter of each reader's latest record; timestamp ties go to the
    higher chapter (furthest progress)."""
    chapters = rs.question_chapters[rs.question_idx]
    order = np.lexsort((chapters, rs.received_at_ms, rs.session_idx))
    s_sorted = rs.session_idx[order]
    tail = np.ones(len(order), dtype=bool)
    tail[:-1] = s_sorted[1:] != s_sorted[:-1]
    out = np.zeros(len(rs.sessions), dtype=np.int64)
    out[s_sorted[tail]] = chapters[order[tail]]
    return out


def last_chapter_histogram(
    rs: ResponseSet,
    reader_class: str = "all",
    profiles: dict[str, ReaderProfile] | None = None,
) -> dict[int, float]:
    """Fraction of readers whose last answered question sits in each chapter.

    ``reader_class`` filters to "trier" or "dabbler" ("all" keeps everyone);
    fractions over the selected readers sum to 1.
    """
    if profiles is None:
        _, profiles = classify_readers(rs)
    selected = [
        p for p in profiles.values() if reader_class == "all" or p.reader_class == reader_class
    ]
    if not selected:
        return {}
    hist: dict[int, int] = {}
    for p in selected:
        hist[p.last_chapter] = hist.get(p.last_chapter, 0) + 1
    return {chapter: count / len(selected) for chapter, count in sorted(hist.items())}


def triers_only(rs: ResponseSet) -> tuple[ResponseSet, int, dict[str, ReaderProfile]]:
    """Restrict to records by triers, also returning the threshold/profiles."""
    threshold, profiles = classify_readers(rs)
    trier_sessions = np.asarray(
        sorted(rs.session_index[s] for s, p in profiles.items() if p.reader_class == "trier"),
        dtype=np.int64,
    )
    return rs.restrict_to_readers(trier_sessions), threshold, profiles


def save_responses(rs: ResponseSet, path: str | Path) -> None:
    """Canonical NDJSON form of the records."""
    with open(path, "w", encoding="utf-8") as f:
        for i in range(rs.n_records):
            f.write(json.dumps({
                "sessionId": rs.sessions[rs.session_idx[i]],
                "questionId": rs.questions[rs.question_idx[i]],
                "quizName": rs.quizzes[rs.quiz_idx[i]],
                "chapter": int(rs.question_chapters[rs.question_idx[i]]),
                "attempt": int(rs.attempt[i]),
                "receivedAtMs": int(rs.received_at_ms[i]),
                "score": int(rs.score[i]),
                "durationMs": int(rs.duration_ms[i]),
            }, ensure_ascii=False, separators=(",", ":")) + "\n")


def summary(rs: ResponseSet, load_report: LoadReport | None = None) -> dict:
    """Reader counts and the trier threshold, for the summary JSON.

    Trier counts depend on which records survived chapter resolution, so the
    load report's dropped-record counts are included when available.
    """
    threshold, profiles = classify_readers(rs)
    triers = sum(1 for p in profiles.values() if p.reader_class == "trier")
    out = {
        "readers": len(profiles),
        "records": rs.n_records,
        "questions": len(np.unique(rs.question_idx)) if rs.n_records else 0,
        "trierThreshold": threshold,
        "triers": triers,
        "dabblers": len(profiles) - triers,
    }
    if load_report is not None:
        out["load"] = load_report.to_dict()
    return out
