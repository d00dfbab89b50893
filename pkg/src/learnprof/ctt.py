"""Classical test theory statistics over a ResponseSet.

Reader ability is the mean of the reader's scores over the questions they
answered; question difficulty is the mean score across its respondents
(higher = easier); question discrimination is the Pearson correlation
between per-reader score on the question and per-reader overall ability
(item-total by default; pass item_rest=True for the corrected variant).
Undefined correlations (zero variance or fewer than two respondents) are
reported as absent, never coerced to zero.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .dataset import ResponseSet, UnknownQuestionError, UnknownReaderError


@dataclass(frozen=True)
class ItemStats:
    question_id: str
    n: int
    difficulty: float
    discrimination: float | None


@dataclass(frozen=True)
class AbilityScore:
    session_id: str
    value: float


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    n: int
    sd_defined: bool
    bin_edges: tuple[float, ...]
    bin_counts: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "sd": self.sd,
            "n": self.n,
            "sdDefined": self.sd_defined,
            "binEdges": list(self.bin_edges),
            "binCounts": list(self.bin_counts),
        }


@dataclass(frozen=True)
class SubsetResult:
    question_ids: tuple[str, ...]
    r: float


class DegenerateDataError(Exception):
    pass


def reader_abilities(rs: ResponseSet) -> np.ndarray:
    """Mean score per session index; NaN for readers with no records."""
    sums = np.bincount(rs.session_idx, weights=rs.score, minlength=len(rs.sessions))
    counts = np.bincount(rs.session_idx, minlength=len(rs.sessions))
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def ability(rs: ResponseSet, session_id: str) -> AbilityScore:
    if session_id not in rs.session_index:
        raise UnknownReaderError(session_id)
    i = rs.session_index[session_id]
    values = reader_abilities(rs)
    if np.isnan(values[i]):
        raise UnknownReaderError(f"{session_id} has no records")
    return AbilityScore(session_id, float(values[i]))


def question_difficulties(rs: ResponseSet) -> np.ndarray:
    """Mean score per question index; NaN for unanswered questions."""
    sums = np.bincount(rs.question_idx, weights=rs.score, minlength=len(rs.questions))
    counts = np.bincount(rs.question_idx, minlength=len(rs.questions))
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def difficulty(rs: ResponseSet, question_id: str) -> float:
    if question_id not in rs.question_index:
        raise UnknownQuestionError(question_id)
    value = question_difficulties(rs)[rs.question_index[question_id]]
    if np.isnan(value):
        raise UnknownQuestionError(f"{question_id} has no responses")
    return float(value)


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Pearson's r, or None when either side has zero variance or n < 2."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n < 2:
        return None
    vx = x - x.mean()
    vy = y - y.mean()
    den = np.sqrt((vx * vx).sum() * (vy * vy).sum())
    if den == 0:
        return None
    return float((vx * vy).sum() / den)


def question_discriminations(rs: ResponseSet, item_rest: bool = False) -> np.ndarray:
    """Item-total (or item-rest) correlation per question index; NaN when
    undefined."""
    abilities = reader_abilities(rs)
    y = rs.score.astype(np.float64)
    if item_rest:
        sums = np.bincount(rs.session_idx, weights=rs.score, minlength=len(rs.sessions))
        counts = np.bincount(rs.session_idx, minlength=len(rs.sessions))
        rest_counts = counts[rs.session_idx] - 1
        with np.errstate(invalid="ignore", divide="ignore"):
            a = np.where(rest_counts > 0, (sums[rs.session_idx] - y) / rest_counts, np.nan)
    else:
        a = abilities[rs.session_idx]

    keep = ~np.isnan(a)
    q = rs.question_idx[keep]
    yk, ak = y[keep], a[keep]
    m = len(rs.questions)
    n = np.bincount(q, minlength=m).astype(np.float64)
    sy = np.bincount(q, weights=yk, minlength=m)
    sa = np.bincount(q, weights=ak, minlength=m)
    syy = np.bincount(q, weights=yk * yk, minlength=m)
    saa = np.bincount(q, weights=ak * ak, minlength=m)
    sya = np.bincount(q, weights=yk * ak, minlength=m)

    with np.errstate(invalid="ignore"):
        num = n * sya - sy * sa
        var_y = n * syy - sy * sy
        var_a = n * saa - sa * sa
        den = np.sqrt(np.maximum(var_y, 0) * np.maximum(var_a, 0))
    out = np.full(m, np.nan)
    ok = (n >= 2) & (var_y > 0) & (var_a > 0)
    out[ok] = num[ok] / den[ok]
    return out


def discrimination(rs: ResponseSet, question_id: str, item_rest: bool = False) -> float | None:
    if question_id not in rs.question_index:
        raise UnknownQuestionError(question_id)
    value = question_discriminations(rs, item_rest=item_rest)[rs.question_index[question_id]]
    return None if np.isnan(value) else float(value)


def item_stats(rs: ResponseSet, item_rest: bool = False) -> list[ItemStats]:
    counts = np.bincount(rs.question_idx, minlength=len(rs.questions))
    diffs = question_difficulties(rs)
    discs = question_discriminations(rs, item_rest=item_rest)
    return [
        ItemStats(
            question_id=qid,
            n=int(counts[i]),
            difficulty=float(diffs[i]),
            discrimination=None if np.isnan(discs[i]) else float(discs[i]),
        )
        for i, qid in enumerate(rs.questions)
        if counts[i] > 0
    ]


def summarize(values: Iterable[float], bins: int = 20) -> Summary:
    """Sample mean, sample sd (n-1 denominator), and fixed-width bins.

    A single value has no sample sd; it is reported as 0 with
    sd_defined=False.
    """
    x = np.asarray(list(values), dtype=np.float64)
    if len(x) == 0:
        raise ValueError("summarize needs at least one value")
    sd_defined = len(x) >= 2
    lo, hi = float(x.min()), float(x.max())
    sd = float(np.std(x, ddof=1)) if sd_defined and lo != hi else 0.0
    if lo == hi:
        hi = lo + 1.0
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    return Summary(
        mean=float(x.mean()),
        sd=sd,
        n=len(x),
        sd_defined=sd_defined,
        bin_edges=tuple(float(e) for e in edges),
        bin_counts=tuple(int(c) for c in counts),
    )


def _score_matrix(rs: ResponseSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense per-reader-per-question mean scores for present readers.

    Returns (answered mask, mean score matrix, rows' session indexes).
    """
    readers = rs.present_readers
    row_of = np.full(len(rs.sessions), -1, dtype=np.int64)
    row_of[readers] = np.arange(len(readers))
    rows = row_of[rs.session_idx]
    shape = (len(readers), len(rs.questions))
    counts = np.zeros(shape)
    sums = np.zeros(shape)
    np.add.at(counts, (rows, rs.question_idx), 1.0)
    np.add.at(sums, (rows, rs.question_idx), rs.score.astype(np.float64))
    answered = counts > 0
    with np.errstate(invalid="ignore"):
        means = np.where(answered, sums / np.maximum(counts, 1.0), 0.0)
    return answered, means, readers


def _batched(iterable, size):
    it = iter(iterable)
    while True:
        chunk = list(itertools.islice(it, size))
        if not chunk:
            return
        yield chunk


def best_subset(
    rs: ResponseSet,
    k: int,
    threads: int = 1,
    batch_size: int = 4096,
) -> SubsetResult:
    """Exhaustively find the k questions whose per-reader mean score best
    correlates with per-reader overall mean score.

    Readers with no answers inside a candidate subset are excluded from that
    subset's correlation. Candidate subsets are evaluated in lexicographic
    batches (vectorized, optionally across threads); ties on r keep the
    lexicographically first subset so results are deterministic.
    """
    n_questions = len(rs.questions)
    if not 1 <= k <= n_questions:
        raise ValueError(f"k must be in 1..{n_questions}")
    answered, means, _ = _score_matrix(rs)
    overall = means.sum(axis=1) / np.maximum(answered.sum(axis=1), 1)

    a = answered.astype(np.float64)
    z = means

    def eval_batch(combos: list[tuple[int, ...]]) -> tuple[float, tuple[int, ...]]:
        sel = np.zeros((len(combos), n_questions))
        for row, combo in enumerate(combos):
            sel[row, list(combo)] = 1.0
        counts = a @ sel.T
        sums = z @ sel.T
        valid = counts > 0
        with np.errstate(invalid="ignore"):
            x = np.where(valid, sums / np.maximum(counts, 1.0), 0.0)
        n = valid.sum(axis=0)
        y = overall[:, None] * valid
        sx = (x * valid).sum(axis=0)
        sy = y.sum(axis=0)
        sxx = (x * x * valid).sum(axis=0)
        syy = (y * y).sum(axis=0)  # y is already masked by valid
        sxy = (x * y).sum(axis=0)
        with np.errstate(invalid="ignore"):
            num = n * sxy - sx * sy
            den = np.sqrt(np.maximum(n * sxx - sx * sx, 0) * np.maximum(n * syy - sy * sy, 0))
            r = np.where((n >= 2) & (den > 0), num / den, np.nan)
        best_r, best_combo = -np.inf, None
        for col in range(len(combos)):
            if not np.isnan(r[col]) and r[col] > best_r:
                best_r, best_combo = float(r[col]), combos[col]
        return best_r, best_combo

    batches = _batched(itertools.combinations(range(n_questions), k), batch_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(eval_batch, batches))
    else:
        results = [eval_batch(chunk) for chunk in batches]

    best_r, best_combo = -np.inf, None
    for r, combo in results:  # submission order = lexicographic order
        if combo is not None and r > best_r:
            best_r, best_combo = r, combo
    if best_combo is None:
        raise DegenerateDataError("no subset yields a defined correlation")
    return SubsetResult(tuple(rs.questions[i] for i in best_combo), best_r)


def subset_search_size(n_questions: int, k: int) -> int:
    return comb(n_questions, k)


def incorrect_answer_distribution(rs: ResponseSet) -> dict[str, dict[str, float]]:
    """Per question: fraction of respondents giving each (normalized) wrong
    answer. Fractions sum to 1 - difficulty. Requires a ResponseSet loaded
    with keep_answers=True."""
    if rs.normalized_answers is None:
        raise ValueError("response set was loaded without keep_answers")
    totals = np.bincount(rs.question_idx, minlength=len(rs.questions))
    out: dict[str, dict[str, float]] = {}
    wrong: dict[int, dict[str, int]] = {}
    for i in range(rs.n_records):
        if rs.score[i] == 0:
            q = int(rs.question_idx[i])
            bucket = wrong.setdefault(q, {})
            text = rs.normalized_answers[i]
            bucket[text] = bucket.get(text, 0) + 1
    for q, bucket in wrong.items():
        out[rs.questions[q]] = {
            text: count / int(totals[q]) for text, count in sorted(bucket.items())
        }
    return out
