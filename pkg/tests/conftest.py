import sys
from pathlib import Path

import numpy as np
import pytest

from learnprof.dataset import ResponseSet

FIXTURES = Path(__file__).parent / "fixtures"

STUB_ORACLE_CMD = [sys.executable, str(FIXTURES / "stub_oracle.py")]


def build_rs(
    records,
    question_chapters: dict[str, int] | None = None,
    quiz_of: dict[str, str] | None = None,
) -> ResponseSet:
    """Assemble a ResponseSet from (session, question, score[, attempt, t]) tuples.

    Timestamps default to the record's position, chapters to 1, quizzes to
    one quiz per chapter.
    """
    rows = []
    for i, rec in enumerate(records):
        session, question, score = rec[0], rec[1], rec[2]
        attempt = rec[3] if len(rec) > 3 else 0
        t = rec[4] if len(rec) > 4 else i
        rows.append((session, question, score, attempt, t))

    sessions, questions, quizzes = [], [], []
    s_index, q_index, z_index = {}, {}, {}
    chapters = []
    cols = {k: [] for k in "sqzaty"}
    for session, question, score, attempt, t in rows:
        if session not in s_index:
            s_index[session] = len(sessions)
            sessions.append(session)
        if question not in q_index:
            q_index[question] = len(questions)
            questions.append(question)
            chapters.append((question_chapters or {}).get(question, 1))
        quiz = (quiz_of or {}).get(question, f"quiz-ch{(question_chapters or {}).get(question, 1)}")
        if quiz not in z_index:
            z_index[quiz] = len(quizzes)
            quizzes.append(quiz)
        cols["s"].append(s_index[session])
        cols["q"].append(q_index[question])
        cols["z"].append(z_index[quiz])
        cols["a"].append(attempt)
        cols["t"].append(t)
        cols["y"].append(score)
    return ResponseSet(
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
        duration_ms=np.zeros(len(rows), dtype=np.int64),
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
