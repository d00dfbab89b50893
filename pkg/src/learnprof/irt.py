"""Three-parameter-logistic item response theory.

The probability that a reader of ability theta answers an item correctly is

    p = lambda + (1 - lambda) * sigmoid(alpha * (theta - beta))

with alpha > 0 the item's discrimination (curve slope), beta its difficulty
(curve location), and lambda in (0, 1) its baseline (the guessing floor).

Fitting maximizes the log posterior: a Bernoulli likelihood over all graded
records plus weakly informative normal priors that pin the location and
scale of the theta axis (3PL is otherwise non-identifiable). Optimization is
full-batch gradient ascent on unconstrained parameters -- log alpha and
logit lambda, so the invariants alpha > 0 and 0 < lambda < 1 hold by
construction -- with a fixed base step halved up to ten times within an
epoch whenever a step would decrease the posterior. Everything is
deterministic given the data and config.
"""

from dataclasses import dataclass, field
from math import log, pi
from typing import Sequence

import numpy as np
from scipy.special import expit, log_expit
from scipy.stats import rankdata

from .ctt import ItemStats, pearson, question_difficulties, reader_abilities
from .dataset import ResponseSet

_LOG_2PI = log(2.0 * pi)


class FitError(Exception):
    pass


class NonFiniteParameterError(FitError):
    pass


@dataclass(frozen=True)
class ItemParams:
    question_id: str
    alpha: float
    beta: float
    lam: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.lam < 1:
            raise ValueError(f"lambda must be in (0, 1), got {self.lam}")


@dataclass(frozen=True)
class AbilityEstimate:
    session_id: str
    theta: float

    def __post_init__(self):
        if not np.isfinite(self.theta):
            raise ValueError(f"theta must be finite, got {self.theta}")


@dataclass(frozen=True)
class FitConfig:
    epochs: int = 2000
    step_size: float = 0.01
    seed: int = 0
    theta_prior: tuple[float, float] = (0.0, 1.0)
    beta_prior: tuple[float, float] = (0.0, 1.0)
    log_alpha_prior: tuple[float, float] = (0.0, 0.5)
    logit_lambda_prior: tuple[float, float] = (-1.4, 1.0)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step size must be positive")


@dataclass
class FitResult:
    items: list[ItemParams]
    abilities: list[AbilityEstimate]
    trajectory: np.ndarray
    config: FitConfig = field(default_factory=FitConfig)


def icc(item: ItemParams, theta: float) -> float:
    """Item characteristic curve: P(correct | theta) for this item."""
    return float(_icc(item.alpha, item.beta, item.lam, theta))


def _icc(alpha, beta, lam, theta):
    return lam + (1.0 - lam) * expit(alpha * (theta - beta))


def _normal_logpdf(x: np.ndarray, prior: tuple[float, float]) -> float:
    mu, sd = prior
    z = (x - mu) / sd
    return float(-0.5 * (z * z).sum() - len(x) * (log(sd) + 0.5 * _LOG_2PI))


def _records(rs: ResponseSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return rs.question_idx, rs.session_idx, rs.score.astype(np.float64)


def _log_likelihood(rs: ResponseSet, a, b, l, t) -> float:
    q, s, y = _records(rs)
    alpha = np.exp(a)
    z = alpha[q] * (t[s] - b[q])
    lam = expit(l)
    p = lam[q] + (1.0 - lam[q]) * expit(z)
    # log(1-p) = log(1-lam) + log(1-sigmoid(z)), each stable via log_expit.
    log_p = np.log(p)
    log_1mp = log_expit(-l)[q] + log_expit(-z)
    return float((y * log_p + (1.0 - y) * log_1mp).sum())


def _log_prior(a, b, l, t, cfg: FitConfig) -> float:
    return (
        _normal_logpdf(t, cfg.theta_prior)
        + _normal_logpdf(b, cfg.beta_prior)
        + _normal_logpdf(a, cfg.log_alpha_prior)
        + _normal_logpdf(l, cfg.logit_lambda_prior)
    )


def log_posterior_raw(
    rs: ResponseSet,
    a: np.ndarray,
    b: np.ndarray,
    l: np.ndarray,
    t: np.ndarray,
    cfg: FitConfig,
) -> float:
    """Log posterior on the unconstrained parameterization.

    ``a`` is log alpha and ``l`` is logit lambda, one entry per rs.questions;
    ``b`` is beta per question and ``t`` is theta per rs.sessions.
    """
    return _log_likelihood(rs, a, b, l, t) + _log_prior(a, b, l, t, cfg)


def log_posterior_gradient(
    rs: ResponseSet,
    a: np.ndarray,
    b: np.ndarray,
    l: np.ndarray,
    t: np.ndarray,
    cfg: FitConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradient of log_posterior_raw as (da, db, dl, dt).

    Per-record accumulation is an ordered bincount, so results are
    bit-reproducible for a given record order.
    """
    q, s, y = _records(rs)
    n_items, n_readers = len(a), len(t)
    alpha = np.exp(a)
    z = alpha[q] * (t[s] - b[q])
    sig = expit(z)
    lam = expit(l)
    lam_q = lam[q]
    p = lam_q + (1.0 - lam_q) * sig
    one_mp = expit(-l)[q] * expit(-z)  # (1-lam)(1-sigmoid(z)), stable

    # d(loglik)/dp: 1/p for correct answers, -1/(1-p) for incorrect.
    with np.errstate(divide="ignore"):
        c = np.where(y > 0, 1.0 / p, -1.0 / one_mp)
    slope = (1.0 - lam_q) * sig * expit(-z)  # (1-lam) s (1-s)

    da = np.bincount(q, weights=c * slope * z, minlength=n_items)
    db = np.bincount(q, weights=-c * slope * alpha[q], minlength=n_items)
    dl = np.bincount(q, weights=c * (1.0 - sig) * lam_q * (1.0 - lam_q), minlength=n_items)
    dt = np.bincount(s, weights=c * slope * alpha[q], minlength=n_readers)

    mu, sd = cfg.log_alpha_prior
    da -= (a - mu) / sd**2
    mu, sd = cfg.beta_prior
    db -= (b - mu) / sd**2
    mu, sd = cfg.logit_lambda_prior
    dl -= (l - mu) / sd**2
    mu, sd = cfg.theta_prior
    dt -= (t - mu) / sd**2
    return da, db, dl, dt


def _align(rs: ResponseSet, items: Sequence[ItemParams], abilities: Sequence[AbilityEstimate]):
    item_map = {p.question_id: p for p in items}
    theta_map = {e.session_id: e.theta for e in abilities}
    used_q = np.unique(rs.question_idx)
    used_s = np.unique(rs.session_idx)
    for i in used_q:
        if rs.questions[i] not in item_map:
            raise FitError(f"no item parameters for question {rs.questions[i]}")
    for i in used_s:
        if rs.sessions[i] not in theta_map:
            raise FitError(f"no ability estimate for reader {rs.sessions[i]}")
    a = np.zeros(len(rs.questions))
    b = np.zeros(len(rs.questions))
    l = np.full(len(rs.questions), -1.4)
    for i, qid in enumerate(rs.questions):
        if qid in item_map:
            p = item_map[qid]
            a[i], b[i], l[i] = log(p.alpha), p.beta, _logit(p.lam)
    t = np.zeros(len(rs.sessions))
    for i, sid in enumerate(rs.sessions):
        if sid in theta_map:
            t[i] = theta_map[sid]
    return a, b, l, t


def _logit(x: float) -> float:
    return log(x / (1.0 - x))


def log_posterior(
    rs: ResponseSet,
    items: Sequence[ItemParams],
    abilities: Sequence[AbilityEstimate],
    cfg: FitConfig | None = None,
) -> float:
    """Log posterior of the given parameters: Bernoulli log likelihood over
    every record plus the prior densities of every parameter passed in.
    Every record's question and reader must have parameters."""
    cfg = cfg or FitConfig()
    arrays = _align(rs, items, abilities)
    prior = _log_prior(
        np.array([log(p.alpha) for p in items]),
        np.array([p.beta for p in items]),
        np.array([_logit(p.lam) for p in items]),
        np.array([e.theta for e in abilities]),
        cfg,
    )
    value = _log_likelihood(rs, *arrays) + prior
    if not np.isfinite(value):
        _raise_non_finite(rs, *arrays)
    return value


def _raise_non_finite(rs: ResponseSet, a, b, l, t):
    for name, arr, labels in (("logAlpha", a, rs.questions), ("beta", b, rs.questions),
                              ("logitLambda", l, rs.questions), ("theta", t, rs.sessions)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if len(bad):
            raise NonFiniteParameterError(f"non-finite {name} for {labels[bad[0]]}")
    raise NonFiniteParameterError("log posterior is non-finite (likelihood underflow)")


def fit(rs: ResponseSet, cfg: FitConfig | None = None) -> FitResult:
    """MAP-fit item parameters and reader abilities by gradient ascent.

    Warm starts: beta from the logit of each question's failure rate, theta
    from standardized CTT ability, log alpha = 0, logit lambda = -1.4.
    Each epoch proposes a step of the configured size and halves it up to
    ten times if the posterior would decrease, so the trajectory is
    non-decreasing. Raises on degenerate questions (all scores equal) and on
    divergence.
    """
    cfg = cfg or FitConfig()
    if rs.n_records == 0:
        raise FitError("cannot fit an empty response set")

    ones = np.bincount(rs.question_idx, weights=(rs.score == 1), minlength=len(rs.questions))
    zeros = np.bincount(rs.question_idx, weights=(rs.score == 0), minlength=len(rs.questions))
    answered = (ones + zeros) > 0
    degenerate = np.flatnonzero(answered & ((ones == 0) | (zeros == 0)))
    if len(degenerate):
        raise FitError(
            f"question {rs.questions[degenerate[0]]} has no score variation; "
            "the 3PL model cannot be fit")

    diffs = np.clip(np.nan_to_num(question_difficulties(rs), nan=0.5), 0.01, 0.99)
    b = np.log((1.0 - diffs) / diffs)
    abil = reader_abilities(rs)
    abil = np.nan_to_num(abil, nan=float(np.nanmean(abil)) if np.isfinite(np.nanmean(abil)) else 0.5)
    sd = abil.std()
    t = (abil - abil.mean()) / sd if sd > 0 else np.zeros_like(abil)
    a = np.zeros(len(rs.questions))
    l = np.full(len(rs.questions), -1.4)

    current = log_posterior_raw(rs, a, b, l, t, cfg)
    if not np.isfinite(current):
        _raise_non_finite(rs, a, b, l, t)
    trajectory = np.empty(cfg.epochs)

    # Backtracking warm start: resume the halving search near the last
    # accepted step (never above the configured base step) instead of
    # re-rejecting the same large steps every epoch.
    step_start = cfg.step_size
    for epoch in range(cfg.epochs):
        da, db, dl, dt = log_posterior_gradient(rs, a, b, l, t, cfg)
        if not all(np.all(np.isfinite(g)) for g in (da, db, dl, dt)):
            raise NonFiniteParameterError(f"gradient diverged at epoch {epoch}")
        step = step_start
        for _ in range(11):
            cand = (a + step * da, b + step * db, l + step * dl, t + step * dt)
            value = log_posterior_raw(rs, *cand, cfg)
            if np.isfinite(value) and value >= current:
                a, b, l, t = cand
                current = value
                step_start = min(cfg.step_size, 2.0 * step)
                break
            step *= 0.5
        else:
            step_start = min(cfg.step_size, 2.0 * step)
        trajectory[epoch] = current

    items = [
        ItemParams(qid, float(np.exp(a[i])), float(b[i]), float(expit(l[i])))
        for i, qid in enumerate(rs.questions)
    ]
    abilities = [AbilityEstimate(sid, float(t[i])) for i, sid in enumerate(rs.sessions)]
    return FitResult(items=items, abilities=abilities, trajectory=trajectory, config=cfg)


@dataclass(frozen=True)
class DecileStat:
    decile: int  # 1 (easiest-to-hardest order by CTT difficulty) .. 10
    n: int
    r: float | None


def decile_correlation(
    ctt_stats: Sequence[ItemStats],
    items: Sequence[ItemParams],
    buckets: int = 10,
) -> list[DecileStat]:
    """Per difficulty-decile Pearson correlation between CTT discrimination
    and IRT alpha.

    Questions with both statistics defined are sorted by CTT difficulty and
    cut into equal-count buckets; a bucket with fewer than two pairs (or no
    variance) reports r as None.
    """
    by_qid = {p.question_id: p for p in items}
    defined = [
        s for s in ctt_stats if s.discrimination is not None and s.question_id in by_qid
    ]
    if len(defined) < buckets:
        raise ValueError(f"need at least {buckets} questions with both statistics defined")
    defined.sort(key=lambda s: (s.difficulty, s.question_id))
    n = len(defined)
    out: list[DecileStat] = []
    for d in range(buckets):
        lo, hi = d * n // buckets, (d + 1) * n // buckets
        chunk = defined[lo:hi]
        rs_ = [s.discrimination for s in chunk]
        alphas = [by_qid[s.question_id].alpha for s in chunk]
        out.append(DecileStat(decile=d + 1, n=len(chunk), r=pearson(rs_, alphas)))
    return out


def icc_table(items: Sequence[ItemParams], lo: float = -3.0, hi: float = 3.0, step: float = 0.1) -> dict:
    """Sampled item characteristic curves on a theta grid, for plotting."""
    grid = np.round(np.arange(lo, hi + step / 2, step), 10)
    return {
        "theta": [float(x) for x in grid],
        "items": {
            p.question_id: [float(v) for v in _icc(p.alpha, p.beta, p.lam, grid)] for p in items
        },
    }


def percentile_table(result: FitResult, rs: ResponseSet) -> list[dict]:
    """Join each reader's theta percentile with their raw-score percentile.

    Surfaces readers whose model-calibrated ability diverges from their raw
    mean score (high theta from acing hard questions despite a low mean, or
    the reverse).
    """
    abil = reader_abilities(rs)
    present = rs.present_readers
    theta_by_sid = {e.session_id: e.theta for e in result.abilities}
    thetas = np.array([theta_by_sid[rs.sessions[i]] for i in present])
    raw = abil[present]
    n = len(present)
    theta_pct = (rankdata(thetas) - 0.5) / n * 100.0
    raw_pct = (rankdata(raw) - 0.5) / n * 100.0
    return [
        {
            "sessionId": rs.sessions[present[i]],
            "theta": float(thetas[i]),
            "thetaPercentile": float(theta_pct[i]),
            "ability": float(raw[i]),
            "abilityPercentile": float(raw_pct[i]),
        }
        for i in range(n)
    ]
