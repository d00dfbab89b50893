"""Synthetic datasets drawn from a known 3PL ground truth.

Real response data is private, so statistical acceptance runs on data
generated here: item parameters and reader abilities are sampled from
lognormal / logit-normal / normal families, every answer is a Bernoulli
draw from the item characteristic curve, and the generating parameters are
kept as the oracle for recovery checks. The generator can emit just an in-memory ResponseSet,
or a full project on disk (quiz TOML files, a chaptered fixture book, and a
telemetry export) so the entire pipeline can be exercised end to end.

Readers optionally stop partway through the book (geometric drop-off per
chapter boundary), which makes drop-off analyses meaningful on synthetic
data.
"""

import json
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .book import BookManifest, BuildConfig, build_book, build_registry
from .dataset import ResponseSet, load
from .quiz import ChoiceKey, Question, QuestionKind, Quiz, serialize_quiz

_OPTION_TEXTS = ("answer A", "answer B", "answer C", "answer D")


@dataclass(frozen=True)
class SynthConfig:
    items: int = 60
    readers: int = 3000
    seed: int = 0
    questions_per_quiz: int = 3
    quizzes_per_chapter: int = 2
    dropout: float = 0.0  # per-chapter-boundary stop probability
    start_ms: int = 1_660_000_000_000
    answer_seconds: float = 29.0

    def __post_init__(self):
        if self.items < 1 or self.readers < 1:
            raise ValueError("need at least one item and one reader")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class GroundTruth:
    question_ids: list[str]
    session_ids: list[str]
    alpha: np.ndarray
    beta: np.ndarray
    lam: np.ndarray
    theta: np.ndarray
    expected_accuracy: np.ndarray  # mean ICC over each item's actual respondents
    commit_hash: str

    def to_dict(self) -> dict:
        return {
            "commitHash": self.commit_hash,
            "items": [
                {
                    "questionId": qid,
                    "alpha": float(self.alpha[i]),
                    "beta": float(self.beta[i]),
                    "lambda": float(self.lam[i]),
                    "expectedAccuracy": float(self.expected_accuracy[i]),
                }
                for i, qid in enumerate(self.question_ids)
            ],
            "readers": [
                {"sessionId": sid, "theta": float(self.theta[j])}
                for j, sid in enumerate(self.session_ids)
            ],
        }


def _rng_uuid(rng: np.random.Generator) -> str:
    return str(uuid.UUID(bytes=rng.bytes(16), version=4))


def _icc_matrix(truth_alpha, truth_beta, truth_lam, theta) -> np.ndarray:
    z = truth_alpha[None, :] * (theta[:, None] - truth_beta[None, :])
    return truth_lam[None, :] + (1.0 - truth_lam[None, :]) * expit(z)


@dataclass
class SynthData:
    truth: GroundTruth
    # answered[j, i]: reader j answered item i; correct[j, i]: their score
    answered: np.ndarray
    correct: np.ndarray
    item_chapter: np.ndarray
    item_quiz: np.ndarray
    quiz_names: list[str]
    quiz_chapter: np.ndarray
    reader_start_ms: np.ndarray


def generate(cfg: SynthConfig) -> SynthData:
    """Sample ground truth and the full response table."""
    rng = np.random.default_rng(cfg.seed)
    n_items, n_readers = cfg.items, cfg.readers

    # Ground-truth families are chosen so the parameters stay identifiable:
    # discriminations bounded away from flat curves and guessing floors with
    # moderate spread around 0.17 (near the 1-in-5 rate of 5-option items).
    alpha = np.exp(rng.normal(0.2, 0.4, size=n_items))
    beta = rng.normal(0.0, 1.0, size=n_items)
    lam = expit(rng.normal(-1.6, 0.4, size=n_items))
    theta = rng.normal(0.0, 1.0, size=n_readers)

    question_ids = [_rng_uuid(rng) for _ in range(n_items)]
    session_ids = [_rng_uuid(rng) for _ in range(n_readers)]
    commit_hash = rng.bytes(20).hex()

    per_chapter = cfg.questions_per_quiz * cfg.quizzes_per_chapter
    item_quiz = np.arange(n_items) // cfg.questions_per_quiz
    item_chapter = np.arange(n_items) // per_chapter + 1
    n_quizzes = int(item_quiz.max()) + 1
    quiz_names = [f"quiz-{q + 1:03d}" for q in range(n_quizzes)]
    quiz_chapter = np.array(
        [int(item_chapter[item_quiz == q][0]) for q in range(n_quizzes)], dtype=np.int64)
    n_chapters = int(item_chapter.max())

    if cfg.dropout > 0:
        # Geometric stopping chapter; survivors of every boundary finish.
        stop = np.minimum(rng.geometric(cfg.dropout, size=n_readers), n_chapters)
    else:
        stop = np.full(n_readers, n_chapters)
    answered = item_chapter[None, :] <= stop[:, None]

    p = _icc_matrix(alpha, beta, lam, theta)
    correct = (rng.random(size=(n_readers, n_items)) < p) & answered

    with np.errstate(invalid="ignore"):
        expected = np.where(
            answered.sum(axis=0) > 0,
            (p * answered).sum(axis=0) / np.maximum(answered.sum(axis=0), 1),
            np.nan,
        )

    reader_start = cfg.start_ms + rng.integers(0, 300 * 24 * 3600 * 1000, size=n_readers)

    return SynthData(
        truth=GroundTruth(
            question_ids=question_ids,
            session_ids=session_ids,
            alpha=alpha,
            beta=beta,
            lam=lam,
            theta=theta,
            expected_accuracy=expected,
            commit_hash=commit_hash,
        ),
        answered=answered,
        correct=correct,
        item_chapter=item_chapter,
        item_quiz=item_quiz,
        quiz_names=quiz_names,
        quiz_chapter=quiz_chapter,
        reader_start_ms=reader_start,
    )


def response_set(data: SynthData) -> ResponseSet:
    """The generated table as an in-memory ResponseSet (no files involved)."""
    readers, items = np.nonzero(data.answered)
    order = np.lexsort((items, readers))
    readers, items = readers[order], items[order]
    # One timestamp per answer: reader start + a fixed cadence through the book.
    position = np.concatenate([np.arange((data.answered[j]).sum()) for j in range(len(data.truth.session_ids))])
    received = data.reader_start_ms[readers] + (position + 1) * 30_000
    return ResponseSet(
        sessions=list(data.truth.session_ids),
        questions=list(data.truth.question_ids),
        question_chapters=data.item_chapter.astype(np.int64),
        quizzes=list(data.quiz_names),
        session_idx=readers.astype(np.int64),
        question_idx=items.astype(np.int64),
        quiz_idx=data.item_quiz[items].astype(np.int64),
        attempt=np.zeros(len(readers), dtype=np.int64),
        received_at_ms=received.astype(np.int64),
        score=data.correct[readers, items].astype(np.int64),
        duration_ms=np.full(len(readers), 29_000, dtype=np.int64),
    )


def _synthetic_question(qid: str, index: int) -> Question:
    return Question(
        id=qid,
        kind=QuestionKind.MULTIPLE_CHOICE,
        prompt=f"Synthetic calibration item {index + 1}: which option is keyed correct?",
        key=ChoiceKey(_OPTION_TEXTS[0]),
        distractors=_OPTION_TEXTS[1:],
        context="Synthetic item; the first option is always the keyed answer.",
    )


def write_project(data: SynthData, out_dir: str | Path, cfg: SynthConfig) -> dict[str, Path]:
    """Write quizzes, a fixture book, a telemetry export, and the ground
    truth under out_dir, then build the book. Returns the artifact paths."""
    out_dir = Path(out_dir)
    quiz_dir = out_dir / "quizzes"
    book_dir = out_dir / "book"
    site_dir = out_dir / "site"
    quiz_dir.mkdir(parents=True, exist_ok=True)
    book_dir.mkdir(parents=True, exist_ok=True)

    questions = [
        _synthetic_question(qid, i) for i, qid in enumerate(data.truth.question_ids)
    ]
    for q, name in enumerate(data.quiz_names):
        members = [questions[i] for i in np.flatnonzero(data.item_quiz == q)]
        quiz = Quiz(name=name, questions=tuple(members))
        (quiz_dir / f"{name}.toml").write_text(serialize_quiz(quiz), encoding="utf-8")

    n_chapters = int(data.item_chapter.max())
    for c in range(1, n_chapters + 1):
        lines = [f"# Chapter {c}", "", f"Synthetic chapter {c} of the fixture book.", ""]
        for q in np.flatnonzero(data.quiz_chapter == c):
            lines.append(f"{{{{#quiz ../quizzes/{data.quiz_names[q]}.toml}}}}")
            lines.append("")
        (book_dir / f"ch{c:02d}.md").write_text("\n".join(lines), encoding="utf-8")

    manifest, _ = build_book(BuildConfig(
        book_root=book_dir,
        quiz_dir=quiz_dir,
        out_dir=site_dir,
        commit_hash=data.truth.commit_hash,
    ))

    export_path = out_dir / "export.ndjson"
    _write_export(data, export_path)

    truth_path = out_dir / "truth.json"
    truth_path.write_text(json.dumps(data.truth.to_dict(), indent=2) + "\n", encoding="utf-8")

    return {
        "quizzes": quiz_dir,
        "book": book_dir,
        "site": site_dir,
        "manifest": site_dir / "manifest.json",
        "export": export_path,
        "truth": truth_path,
    }


def _write_export(data: SynthData, path: Path) -> None:
    """One answers event per (reader, quiz), in server arrival order."""
    rng = np.random.default_rng([0xB00C, int(data.truth.commit_hash[:8], 16)])
    events = []
    for j, sid in enumerate(data.truth.session_ids):
        ts = int(data.reader_start_ms[j])
        for q, quiz_name in enumerate(data.quiz_names):
            members = np.flatnonzero((data.item_quiz == q) & data.answered[j])
            if len(members) == 0:
                continue
            answers = []
            for i in members:
                ts += 30_000
                correct = bool(data.correct[j, i])
                if correct:
                    raw = _OPTION_TEXTS[0]
                else:
                    raw = _OPTION_TEXTS[1 + int(rng.integers(0, 3))]
                answers.append({
                    "questionId": data.truth.question_ids[i],
                    "answer": raw,
                    "correct": correct,
                    "durationMs": 29_000,
                })
            events.append((ts, {
                "sessionId": sid,
                "quizName": quiz_name,
                "commitHash": data.truth.commit_hash,
                "attempt": 0,
                "clientTimestampMs": ts,
                "answers": answers,
            }))
    events.sort(key=lambda pair: pair[0])
    with open(path, "w", encoding="utf-8") as f:
        for event_id, (ts, body) in enumerate(events, start=1):
            f.write(json.dumps({
                "eventId": event_id,
                "receivedAtMs": ts + 40,
                "kind": "answers",
                "body": body,
            }, ensure_ascii=False, separators=(",", ":")) + "\n")


def load_project(out_dir: str | Path) -> tuple[ResponseSet, dict]:
    """Load a written project back through the real pipeline (manifest,
    registry, regrading)."""
    out_dir = Path(out_dir)
    manifest = BookManifest.load(out_dir / "site" / "manifest.json")
    registry = build_registry([manifest])
    rs, report = load(out_dir / "export.ndjson", manifest, registry, keep_answers=True)
    truth = json.loads((out_dir / "truth.json").read_text(encoding="utf-8"))
    return rs, {"truth": truth, "loadReport": report.to_dict()}
