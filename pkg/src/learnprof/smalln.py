"""Estimating metric error at small reader counts.

For a metric f mapping a reader set to a vector of n statistics, and for
each sample size k: draw k readers without replacement, rejecting draws
until the metric's validity predicate holds on the sample (a Las Vegas
loop, here bounded by a maximum attempt count so it always terminates),
then record the error of f on the sample against f on the full set.

Raw error is the mean absolute componentwise difference |x - x'|; rank
error is the mean absolute rank displacement |ranks(x) - ranks(x')|
normalized by n, landing in [0, ~0.5]. Per-iteration RNG streams are
derived from (seed, metric, k, iteration), so results are bit-reproducible
and iterations are independent.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .ctt import question_difficulties, question_discriminations
from .dataset import ResponseSet, _last_chapter_per_reader


class SimulationError(Exception):
    pass


@dataclass(frozen=True)
class MetricSpec:
    name: str
    compute: Callable[[ResponseSet], np.ndarray]
    validity: Callable[[ResponseSet], bool]
    min_k: int


@dataclass(frozen=True)
class SimConfig:
    ks: tuple[int, ...] | None = None  # default: powers of ten from min_k to |S|
    iterations: int = 1000
    seed: int = 0
    max_resample_attempts: int = 10_000

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.ks is not None and list(self.ks) != sorted(self.ks):
            raise ValueError("ks must be sorted ascending")


@dataclass(frozen=True)
class SimPoint:
    metric: str
    k: int
    mean_raw_error: float
    sd_raw_error: float
    mean_rank_error: float
    sd_rank_error: float
    mean_attempts: float
    max_attempts: int

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "k": self.k,
            "meanRawError": self.mean_raw_error,
            "sdRawError": self.sd_raw_error,
            "meanRankError": self.mean_rank_error,
            "sdRankError": self.sd_rank_error,
            "meanAttempts": self.mean_attempts,
            "maxAttempts": self.max_attempts,
        }


@dataclass
class SimResult:
    metric: str
    points: list[SimPoint] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["metric,k,meanRaw,sdRaw,meanRank,sdRank"]
        for p in self.points:
            lines.append(
                f"{p.metric},{p.k},{p.mean_raw_error!r},{p.sd_raw_error!r},"
                f"{p.mean_rank_error!r},{p.sd_rank_error!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"metric": self.metric, "points": [p.to_dict() for p in self.points]}


def ranks(x: Sequence[float]) -> np.ndarray:
    """Ascending ranks 1..n; ties get the average of their rank span."""
    return rankdata(np.asarray(x, dtype=np.float64), method="average")


def rank_error(r: np.ndarray, r2: np.ndarray) -> float:
    """Mean absolute rank displacement over n, i.e. sum |r - r2| / n^2."""
    r = np.asarray(r, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    if len(r) != len(r2):
        raise ValueError("rank vectors must have equal length")
    n = len(r)
    return float(np.abs(r - r2).sum() / (n * n))


def raw_error(x: np.ndarray, x2: np.ndarray) -> float:
    """Mean absolute componentwise difference."""
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if len(x) != len(x2):
        raise ValueError("metric vectors must have equal length")
    return float(np.abs(x - x2).mean())


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


def _iteration_rng(seed: int, metric: str, k: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng([seed, _stable_hash(metric), k, iteration])


def default_ks(min_k: int, population: int) -> tuple[int, ...]:
    """Powers of ten from min_k up to the population size, inclusive."""
    ks = []
    k = min_k
    while k < population:
        ks.append(k)
        k *= 10
    ks.append(population)
    return tuple(ks)


def simulate(rs: ResponseSet, metric: MetricSpec, cfg: SimConfig | None = None) -> SimResult:
    """Run the error-estimation loop for one metric over all sample sizes.

    The metric must be valid on the full reader set. Each (k, iteration)
    resamples readers until validity holds, bounded by
    cfg.max_resample_attempts; exceeding the bound fails, naming k. At
    k = |S| the sample is the whole population and both errors are exactly 0.
    """
    cfg = cfg or SimConfig()
    readers = rs.present_readers
    population = len(readers)
    if population == 0:
        raise SimulationError("response set has no readers")
    if not metric.validity(rs):
        raise SimulationError(f"metric {metric.name!r} is invalid on the full reader set")

    ks = cfg.ks if cfg.ks is not None else default_ks(metric.min_k, population)
    if any(k < 1 or k > population for k in ks):
        raise SimulationError(f"sample sizes must lie in 1..{population}, got {list(ks)}")

    x_full = np.asarray(metric.compute(rs), dtype=np.float64)
    r_full = ranks(x_full)

    result = SimResult(metric=metric.name)
    for k in ks:
        raw = np.empty(cfg.iterations)
        rank = np.empty(cfg.iterations)
        attempts = np.empty(cfg.iterations, dtype=np.int64)
        for i in range(cfg.iterations):
            rng = _iteration_rng(cfg.seed, metric.name, k, i)
            for attempt in range(1, cfg.max_resample_attempts + 1):
                sample = readers[rng.choice(population, size=k, replace=False)]
                sub = rs.restrict_to_readers(sample)
                if metric.validity(sub):
                    break
            else:
                raise SimulationError(
                    f"metric {metric.name!r}: no valid sample of size {k} in "
                    f"{cfg.max_resample_attempts} attempts (iteration {i})")
            x = np.asarray(metric.compute(sub), dtype=np.float64)
            raw[i] = raw_error(x_full, x)
            rank[i] = rank_error(r_full, ranks(x))
            attempts[i] = attempt
        sd_raw = float(np.std(raw, ddof=1)) if cfg.iterations > 1 else 0.0
        sd_rank = float(np.std(rank, ddof=1)) if cfg.iterations > 1 else 0.0
        result.points.append(SimPoint(
            metric=metric.name,
            k=k,
            mean_raw_error=float(raw.mean()),
            sd_raw_error=sd_raw,
            mean_rank_error=float(rank.mean()),
            sd_rank_error=sd_rank,
            mean_attempts=float(attempts.mean()),
            max_attempts=int(attempts.max()),
        ))
    return result


# --- Built-in metrics --------------------------------------------------------


def _dropoff_vector(rs: ResponseSet) -> np.ndarray:
    """Fraction of readers whose last answered question is in each chapter,
    over the chapter universe of the full question set."""
    chapters = rs.chapters
    last = _last_chapter_per_reader(rs)[rs.present_readers]
    counts = np.array([(last == c).sum() for c in chapters], dtype=np.float64)
    return counts / max(len(last), 1)


def _dropoff_valid(rs: ResponseSet) -> bool:
    chapters = rs.chapters
    last = _last_chapter_per_reader(rs)[rs.present_readers]
    return bool(np.all(np.isin(chapters, last)))


def _difficulty_vector(rs: ResponseSet) -> np.ndarray:
    return question_difficulties(rs)


def _difficulty_valid(rs: ResponseSet) -> bool:
    counts = np.bincount(rs.question_idx, minlength=len(rs.questions))
    return bool(np.all(counts >= 1))


def _discrimination_vector(rs: ResponseSet) -> np.ndarray:
    return question_discriminations(rs)


def _discrimination_valid(rs: ResponseSet) -> bool:
    return bool(np.all(np.isfinite(question_discriminations(rs))))


def builtin_metrics() -> dict[str, MetricSpec]:
    """The three stock metrics: chapter drop-off, CTT difficulty, and CTT
    discrimination, each with its validity predicate and minimum sample
    size."""
    return {
        "dropoff": MetricSpec(
            name="dropoff",
            compute=_dropoff_vector,
            validity=_dropoff_valid,
            min_k=100,
        ),
        "cttDifficulty": MetricSpec(
            name="cttDifficulty",
            compute=_difficulty_vector,
            validity=_difficulty_valid,
            min_k=10,
        ),
        "cttDiscrimination": MetricSpec(
            name="cttDiscrimination",
            compute=_discrimination_vector,
            validity=_discrimination_valid,
            min_k=100,
        ),
    }
