"""Temporal A/B evaluation of content edits.

Each intervention names a question and a deployment time; first-attempt
scores on the question are split at that time (the boundary itself counts as
"after") and compared with a two-tailed Welch t-test. Effect sizes are
Cohen's d with a pooled standard deviation (variance p(1-p) for Bernoulli
summaries), p-values are Benjamini-Hochberg adjusted across the batch, and
a closed-form power analysis reports the total sample size needed to detect
a given effect.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .dataset import ResponseSet, first_attempts


class InsufficientDataError(Exception):
    pass


@dataclass(frozen=True)
class SampleSummary:
    mean: float
    n: int
    var: float

    @classmethod
    def from_scores(cls, scores: Sequence[float]) -> "SampleSummary":
        x = np.asarray(scores, dtype=np.float64)
        var = float(np.var(x, ddof=1)) if len(x) >= 2 else 0.0
        return cls(mean=float(x.mean()), n=len(x), var=var)

    @classmethod
    def bernoulli(cls, mean: float, n: int) -> "SampleSummary":
        """Summary of a 0/1 sample from its mean alone (variance p(1-p))."""
        return cls(mean=mean, n=n, var=mean * (1.0 - mean))


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p_two_tailed: float


def _as_summary(sample) -> SampleSummary:
    if isinstance(sample, SampleSummary):
        return sample
    return SampleSummary.from_scores(sample)


def welch_t_test(a, b, pooled: bool = False) -> TTestResult:
    """Two-tailed two-sample t-test; Welch by default, Student with pooled=True.

    Accepts raw score sequences or SampleSummary values. Both samples need
    n >= 2. Two zero-variance samples with equal means give p = 1 by
    convention; with unequal means the difference is certain, p = 0.
    """
    sa, sb = _as_summary(a), _as_summary(b)
    if sa.n < 2 or sb.n < 2:
        raise ValueError("both samples need at least two observations")

    if pooled:
        df = sa.n + sb.n - 2
        pooled_var = ((sa.n - 1) * sa.var + (sb.n - 1) * sb.var) / df
        se2 = pooled_var * (1.0 / sa.n + 1.0 / sb.n)
    else:
        va, vb = sa.var / sa.n, sb.var / sb.n
        se2 = va + vb
        if se2 > 0:
            df = se2**2 / (va**2 / (sa.n - 1) + vb**2 / (sb.n - 1))
        else:
            df = sa.n + sb.n - 2

    if se2 == 0:
        if sa.mean == sb.mean:
            return TTestResult(t=0.0, df=float(df), p_two_tailed=1.0)
        t = math.inf if sa.mean > sb.mean else -math.inf
        return TTestResult(t=t, df=float(df), p_two_tailed=0.0)

    t = (sa.mean - sb.mean) / math.sqrt(se2)
    p = 2.0 * float(sps.t.sf(abs(t), df))
    return TTestResult(t=t, df=float(df), p_two_tailed=p)


def cohens_d(a, b) -> float | None:
    """Standardized mean difference (b - a) / pooled SD; None when the
    pooled SD is zero."""
    sa, sb = _as_summary(a), _as_summary(b)
    if sa.n + sb.n < 3:
        raise ValueError("need at least three observations in total")
    pooled_var = ((sa.n - 1) * sa.var + (sb.n - 1) * sb.var) / (sa.n + sb.n - 2)
    if pooled_var <= 0:
        return None
    return (sb.mean - sa.mean) / math.sqrt(pooled_var)


def bh_adjust(p_values: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg step-up adjusted p-values, in the input order.

    adj_(i) = min over j >= i of p_(j) * m / j, clamped at 1.
    """
    p = np.asarray(p_values, dtype=np.float64)
    if len(p) == 0:
        return []
    if np.any((p <= 0) | (p > 1)):
        raise ValueError("p-values must lie in (0, 1]")
    m = len(p)
    order = np.argsort(p, kind="stable")
    # m/j computed first so the j = m factor is exactly 1.
    scaled = p[order] * (m / np.arange(1, m + 1))
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted = np.minimum(adjusted, 1.0)
    out = np.empty(m)
    out[order] = adjusted
    return [float(v) for v in out]


@dataclass(frozen=True)
class Intervention:
    name: str
    question_id: str
    deployed_at_ms: int


@dataclass
class InterventionReport:
    name: str
    question_id: str
    before_mean: float | None = None
    after_mean: float | None = None
    n_before: int = 0
    n_after: int = 0
    delta: float | None = None
    effect_size: float | None = None
    p_value: float | None = None
    p_adjusted: float | None = None
    significant: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "questionId": self.question_id,
            "before": self.before_mean,
            "nBefore": self.n_before,
            "after": self.after_mean,
            "nAfter": self.n_after,
            "delta": self.delta,
            "d": self.effect_size,
            "p": self.p_value,
            "pAdjusted": self.p_adjusted,
            "significant": self.significant,
            "error": self.error,
        }


def split_by_time(rs: ResponseSet, intervention: Intervention) -> tuple[np.ndarray, np.ndarray]:
    """First-attempt scores on the question, partitioned at deployment time.

    Records stamped exactly at the deployment instant count as "after"
    (deployment precedes observation). Raises when either side is empty.
    """
    if intervention.question_id not in rs.question_index:
        raise InsufficientDataError(f"unknown question {intervention.question_id}")
    fa = first_attempts(rs)
    mask = fa.question_idx == fa.question_index[intervention.question_id]
    t = fa.received_at_ms[mask]
    y = fa.score[mask].astype(np.float64)
    before = y[t < intervention.deployed_at_ms]
    after = y[t >= intervention.deployed_at_ms]
    if len(before) == 0 or len(after) == 0:
        raise InsufficientDataError(
            f"{intervention.name}: insufficient data "
            f"({len(before)} before, {len(after)} after deployment)")
    return before, after


def evaluate_all(
    rs: ResponseSet,
    interventions: Sequence[Intervention],
    alpha: float = 0.05,
    pooled: bool = False,
) -> list[InterventionReport]:
    """One report per intervention, BH-adjusted across the batch.

    Per-intervention failures (no data on one side of the split) are
    recorded on that report; the rest of the batch continues and the BH
    correction runs over the tests that produced a p-value.
    """
    reports = [InterventionReport(name=iv.name, question_id=iv.question_id) for iv in interventions]
    for iv, report in zip(interventions, reports):
        try:
            before, after = split_by_time(rs, iv)
        except InsufficientDataError as exc:
            report.error = str(exc)
            continue
        sa = SampleSummary.from_scores(before)
        sb = SampleSummary.from_scores(after)
        report.before_mean, report.n_before = sa.mean, sa.n
        report.after_mean, report.n_after = sb.mean, sb.n
        report.delta = sb.mean - sa.mean
        report.effect_size = cohens_d(sa, sb)
        report.p_value = welch_t_test(sa, sb, pooled=pooled).p_two_tailed

    tested = [r for r in reports if r.p_value is not None]
    adjusted = bh_adjust([max(r.p_value, np.nextafter(0, 1)) for r in tested])
    for report, adj in zip(tested, adjusted):
        report.p_adjusted = adj
        report.significant = adj < alpha
    return reports


def render_report_table(reports: Sequence[InterventionReport]) -> str:
    """Fixed-width text table of intervention effects."""
    header = f"{'Description':<36} {'Before':>6} {'N':>6} {'After':>6} {'N':>6} {'Δ':>6} {'d':>6} {'p':>8}"
    lines = [header, "-" * len(header)]
    for r in reports:
        if r.error is not None:
            lines.append(f"{r.name:<36} error: {r.error}")
            continue
        p_txt = "<0.001" if r.p_adjusted < 0.001 else f"{r.p_adjusted:.3f}"
        if r.significant:
            p_txt += "*"
        d_txt = f"{r.effect_size:6.2f}" if r.effect_size is not None else "   n/a"
        lines.append(
            f"{r.name:<36} {r.before_mean:6.2f} {r.n_before:6d} {r.after_mean:6.2f} "
            f"{r.n_after:6d} {r.delta:6.2f} {d_txt} {p_txt:>8}")
    return "\n".join(lines)


@dataclass(frozen=True)
class PowerSpec:
    effect_size: float
    alpha: float = 0.05
    power: float = 0.8

    def __post_init__(self):
        if not self.effect_size > 0:
            raise ValueError("effect size must be positive")
        if not 0 < self.alpha < 1 or not 0 < self.power < 1:
            raise ValueError("alpha and power must lie in (0, 1)")


@dataclass(frozen=True)
class PowerResult:
    n_per_group: int
    n_total: int


def power_required(spec: PowerSpec) -> PowerResult:
    """Per-group sample size for a two-tailed two-sample t-test.

    Normal approximation n = 2 ((z_{1-alpha/2} + z_power) / d)^2, then one
    refinement that swaps the normal quantiles for t quantiles at the
    approximation's degrees of freedom (the noncentral-t correction).
    """
    z_a = sps.norm.ppf(1.0 - spec.alpha / 2.0)
    z_b = sps.norm.ppf(spec.power)
    n0 = 2.0 * ((z_a + z_b) / spec.effect_size) ** 2
    df = max(2.0 * (math.ceil(n0) - 1.0), 1.0)
    t_a = sps.t.ppf(1.0 - spec.alpha / 2.0, df)
    t_b = sps.t.ppf(spec.power, df)
    n = math.ceil(2.0 * ((t_a + t_b) / spec.effect_size) ** 2)
    return PowerResult(n_per_group=n, n_total=2 * n)
