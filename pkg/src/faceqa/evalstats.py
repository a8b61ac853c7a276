"""Rank statistics and the benchmark table for metric-vs-human comparison.

`srcc` and `krcc` take the exact integer shortcut whenever both vectors
are tie-free (single correctly rounded division), falling back to the
tie-adjusted float formulas otherwise.  `weighted_rank` aggregates rater
orderings with positional weights n, n-1, ..., 1 (rank 1 weighs most).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError, UndefinedCorrelationError
from .ioutil import atomic_write_text

POLARITY_HIGHER = "higher"
POLARITY_LOWER = "lower"


@dataclass(frozen=True)
class RankingRecord:
    """One rater's ordering of one sample; position 0 = judged most real."""

    sample_id: str
    rater_id: str
    ordering: tuple

    def __post_init__(self):
        object.__setattr__(self, "ordering", tuple(str(v) for v in self.ordering))
        if not self.sample_id or not self.rater_id:
            raise ParameterError("sample_id and rater_id must be non-empty")


@dataclass(frozen=True)
class MetricScores:
    """Named metric with per-image scores and a declared polarity."""

    name: str
    polarity: str
    scores: dict

    def __post_init__(self):
        if self.polarity not in (POLARITY_HIGHER, POLARITY_LOWER):
            raise ParameterError(f"polarity must be higher|lower, got {self.polarity!r}")
        bad = [k for k, v in self.scores.items() if not math.isfinite(float(v))]
        if bad:
            raise ParameterError(f"non-finite scores for {bad}")


# ---------------------------------------------------------------------------
# rank correlation


def _check_pair(x, y) -> tuple:
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.ndim != 1 or yv.ndim != 1 or len(xv) != len(yv):
        raise ParameterError(
            f"need two equal-length vectors, got {xv.shape} and {yv.shape}")
    if len(xv) < 2:
        raise ParameterError(f"need length >= 2, got {len(xv)}")
    if (xv == xv[0]).all():
        raise UndefinedCorrelationError("first vector is constant")
    if (yv == yv[0]).all():
        raise UndefinedCorrelationError("second vector is constant")
    return xv, yv


def _average_ranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    i = 0
    sv = v[order]
    while i < len(v):
        j = i
        while j < len(v) and sv[j] == sv[i]:
            j += 1
        ranks[order[i:j]] = (i + 1 + j) / 2.0
        i = j
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    am = a - a.mean()
    bm = b - b.mean()
    denom = math.sqrt(float((am * am).sum()) * float((bm * bm).sum()))
    if denom == 0.0:
        raise UndefinedCorrelationError("zero variance after ranking")
    return float((am * bm).sum()) / denom


def srcc(x, y) -> float:
    """Rank correlation: Pearson over (average) ranks.

    Tie-free inputs use 1 - 6*sum(d^2)/(n(n^2-1)) evaluated as one
    integer division, which is exact to the last bit.
    """
    xv, yv = _check_pair(x, y)
    rx = _average_ranks(xv)
    ry = _average_ranks(yv)
    n = len(xv)
    if len(np.unique(xv)) == n and len(np.unique(yv)) == n:
        d = rx.astype(np.int64) - ry.astype(np.int64)
        s2 = int((d * d).sum())
        m = n * (n * n - 1)
        return (m - 6 * s2) / m
    return _pearson(rx, ry)


def krcc(x, y) -> float:
    """Tie-adjusted rank concordance (tau-b).

    Tie-free inputs reduce to (concordant - discordant) / (n(n-1)/2) as
    one integer division.
    """
    xv, yv = _check_pair(x, y)
    n = len(xv)
    concordant = discordant = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            sx = int(xv[i] > xv[j]) - int(xv[i] < xv[j])
            sy = int(yv[i] > yv[j]) - int(yv[i] < yv[j])
            if sx != 0 and sy != 0:
                if sx == sy:
                    concordant += 1
                else:
                    discordant += 1
    n0 = n * (n - 1) // 2
    tie_x = _tie_pairs(xv)
    tie_y = _tie_pairs(yv)
    if tie_x == 0 and tie_y == 0:
        return (concordant - discordant) / n0
    denom = math.sqrt(float(n0 - tie_x) * float(n0 - tie_y))
    if denom == 0.0:
        raise UndefinedCorrelationError("all pairs tied")
    return (concordant - discordant) / denom


def _tie_pairs(v: np.ndarray) -> int:
    _, counts = np.unique(v, return_counts=True)
    return int(sum(c * (c - 1) // 2 for c in counts))


# ---------------------------------------------------------------------------
# weighted rank aggregation


@dataclass
class WeightedRankResult:
    sample_id: str
    scores: dict                 # image id -> average positional weight
    ordering: list               # image ids, best first
    rater_count: int
    rejected: list = field(default_factory=list)   # (rater_id, reason)


def weighted_rank(responses: Sequence[RankingRecord]) -> WeightedRankResult:
    """Average positional weights over raters for one sample.

    A rank r among n images earns weight n+1-r, so a single rater
    ranking six images yields scores 6, 5, 4, 3, 2, 1.  Records whose
    ordering is not a permutation of the sample's image set are rejected
    with a reason instead of poisoning the aggregate.  Final ordering is
    by descending score, ties broken by image id.
    """
    records = list(responses)
    if not records:
        raise ParameterError("no responses to aggregate")
    sample_id = records[0].sample_id
    image_set: frozenset | None = None
    sums: dict = {}
    accepted = 0
    rejected = []
    for rec in records:
        if rec.sample_id != sample_id:
            rejected.append((rec.rater_id,
                             f"sample {rec.sample_id!r} != {sample_id!r}"))
            continue
        ordering = rec.ordering
        if len(set(ordering)) != len(ordering):
            rejected.append((rec.rater_id, "ordering repeats an image id"))
            continue
        if image_set is None:
            image_set = frozenset(ordering)
        if frozenset(ordering) != image_set:
            rejected.append((rec.rater_id, "ordering is not a permutation "
                                           "of the sample's image set"))
            continue
        n = len(ordering)
        for position, image_id in enumerate(ordering):
            sums[image_id] = sums.get(image_id, 0) + (n - position)
        accepted += 1
    if accepted == 0:
        raise ParameterError(
            f"no valid responses for sample {sample_id!r}: {rejected}")
    scores = {img: sums[img] / accepted for img in sorted(sums)}
    ordering = sorted(scores, key=lambda img: (-scores[img], img))
    return WeightedRankResult(sample_id=sample_id, scores=scores,
                              ordering=ordering, rater_count=accepted,
                              rejected=rejected)


# ---------------------------------------------------------------------------
# file formats


def load_responses(path: Path) -> tuple:
    """Read a JSONL response log; returns (records, rejected-line reasons)."""
    records, rejected = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            records.append(RankingRecord(
                sample_id=str(row["sample_id"]),
                rater_id=str(row["rater_id"]),
                ordering=tuple(row["ordering"])))
        except (json.JSONDecodeError, KeyError, TypeError, ParameterError) as exc:
            rejected.append(f"line {lineno}: {exc}")
    return records, rejected


def load_metric_csv(path: Path, name: str | None = None) -> MetricScores:
    """Read an `id,score` CSV with a `# polarity: higher|lower` header."""
    path = Path(path)
    polarity = POLARITY_HIGHER
    scores = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.lower().startswith("polarity:"):
                polarity = body.split(":", 1)[1].strip().lower()
            continue
        first, _, rest = line.partition(",")
        if first in ("id", "image_id"):
            continue
        try:
            scores[first] = float(rest)
        except ValueError as exc:
            raise ParameterError(f"{path}: bad row {line!r}") from exc
    return MetricScores(name=name or path.stem, polarity=polarity, scores=scores)


# ---------------------------------------------------------------------------
# benchmark table


@dataclass
class BenchmarkRow:
    metric: str
    mean_srcc: float
    mean_krcc: float
    samples_used: int
    samples_excluded: int
    exclusion_reasons: list


def _signed(values: np.ndarray, polarity: str) -> np.ndarray:
    return values if polarity == POLARITY_HIGHER else -values


def benchmark(human: dict, metrics: Sequence[MetricScores],
              pooled: bool = False) -> list:
    """Correlate each metric against human weighted scores.

    ``human`` maps sample id -> {image id -> weighted score}.  Per
    metric and sample, SRCC/KRCC run between the polarity-adjusted
    metric scores and the human scores over that sample's images; sample
    results average into the row.  Samples with missing scores or a
    constant vector are excluded and counted.  With ``pooled=True`` all
    samples concatenate into one pair of vectors instead (scale mixing
    caveat applies); exclusions then only cover missing scores.

    Rows come back sorted by mean SRCC, best first.
    """
    rows = []
    sample_ids = sorted(human)
    if not sample_ids:
        raise ParameterError("benchmark needs at least one sample")
    for metric in metrics:
        excluded = []
        srcc_vals, krcc_vals = [], []
        pooled_metric, pooled_human = [], []
        for sid in sample_ids:
            image_ids = sorted(human[sid])
            missing = [i for i in image_ids if i not in metric.scores]
            if missing:
                excluded.append((sid, f"missing scores for {missing}"))
                continue
            mvec = _signed(np.array([float(metric.scores[i]) for i in image_ids]),
                           metric.polarity)
            hvec = np.array([float(human[sid][i]) for i in image_ids])
            if pooled:
                pooled_metric.extend(mvec.tolist())
                pooled_human.extend(hvec.tolist())
                continue
            try:
                srcc_vals.append(srcc(mvec, hvec))
                krcc_vals.append(krcc(mvec, hvec))
            except UndefinedCorrelationError as exc:
                excluded.append((sid, str(exc)))
        if pooled and pooled_metric:
            try:
                srcc_vals = [srcc(pooled_metric, pooled_human)]
                krcc_vals = [krcc(pooled_metric, pooled_human)]
            except UndefinedCorrelationError as exc:
                excluded.append(("pooled", str(exc)))
        used = len(srcc_vals)
        rows.append(BenchmarkRow(
            metric=metric.name,
            mean_srcc=float(np.mean(srcc_vals)) if used else float("nan"),
            mean_krcc=float(np.mean(krcc_vals)) if used else float("nan"),
            samples_used=used,
            samples_excluded=len(excluded),
            exclusion_reasons=excluded))
    rows.sort(key=lambda r: (-(r.mean_srcc if math.isfinite(r.mean_srcc)
                               else -math.inf), r.metric))
    return rows


def render_table(rows: Sequence[BenchmarkRow]) -> str:
    """Aligned plain-text rendering of benchmark rows."""
    header = ("metric", "srcc", "krcc", "samples", "excluded")
    body = [(r.metric, f"{r.mean_srcc:.4f}", f"{r.mean_krcc:.4f}",
             str(r.samples_used), str(r.samples_excluded)) for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h)
              for i, h in enumerate(header)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(header), fmt(tuple("-" * w for w in widths))]
    lines += [fmt(row) for row in body]
    return "\n".join(lines) + "\n"


def write_table_csv(rows: Sequence[BenchmarkRow], path: Path) -> None:
    lines = ["metric,srcc,krcc,samples_used,samples_excluded"]
    lines += [f"{r.metric},{r.mean_srcc:.6f},{r.mean_krcc:.6f},"
              f"{r.samples_used},{r.samples_excluded}" for r in rows]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")
