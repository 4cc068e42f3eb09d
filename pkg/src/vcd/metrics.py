"""Measurement arithmetic: detection metrics, judgment timelines, agreement.

Detection precision/recall work directly on percentage-mode confusion counts
(the shared denominator cancels). Judgment timelines align per-window risk
reports to the second-by-second view used in expert review. Rater agreement
is the two-way random-effects intraclass correlation, single-rater absolute
agreement form: with n items, k raters, and the usual mean squares

    MSR (between items), MSC (between raters), MSE (residual)

the coefficient is (MSR - MSE) / (MSR + (k-1) MSE + k (MSC - MSE) / n).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .risk import RiskReport, interval_bounds


class UndefinedMetricError(ValueError):
    """The requested statistic has no defined value on this input."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: float
    fp: float
    fn: float
    tn: float = 0.0
    unit: str = "percent"  # or "count"

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be >= 0")
        if self.unit == "percent" and self.tp + self.fp + self.fn + self.tn > 100.5:
            raise ValueError("percentage-mode counts exceed 100%")


def precision_recall(c: ConfusionCounts) -> tuple[float, float]:
    """Fractions (precision, recall); undefined denominators raise."""
    if c.tp + c.fp == 0:
        raise UndefinedMetricError("precision undefined: tp + fp == 0")
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("recall undefined: tp + fn == 0")
    return c.tp / (c.tp + c.fp), c.tp / (c.tp + c.fn)


# --- judgment timeline ----------------------------------------------------------

@dataclass(frozen=True)
class JudgmentTimeline:
    risky_by_second: Mapping[int, frozenset[int]]
    look_back_s: float = 3.0

    def seconds(self) -> list[int]:
        return sorted(self.risky_by_second)


def build_timeline(reports: Sequence[RiskReport], fps: float) -> JudgmentTimeline:
    """Second-by-second risky-id sets from ordered window reports.

    Each second takes the risky set of the report whose window covers it; a
    second covered by no report is an error naming the gap.
    """
    if fps <= 0:
        raise ValueError("fps must be > 0")
    if not reports:
        return JudgmentTimeline(risky_by_second={})
    coverage: dict[int, frozenset[int]] = {}
    max_second = -1
    for report in reports:
        start, end = interval_bounds(report.interval)
        first_s = int(start / fps)
        last_s = int(end / fps)
        max_second = max(max_second, last_s)
        for s in range(first_s, last_s + 1):
            if s not in coverage:
                coverage[s] = frozenset(report.risky_ids)
    for s in range(0, max_second + 1):
        if s not in coverage:
            raise UndefinedMetricError(f"no report covers second {s}")
    return JudgmentTimeline(risky_by_second=coverage)


# --- inter-rater agreement -------------------------------------------------------

def icc_two_way_random(matrix: Sequence[Sequence[float]] | np.ndarray) -> float:
    """ICC(2,1): two-way random effects, absolute agreement, single rater.

    ``matrix`` is raters x items. Requires at least 2 raters and 2 items with
    no missing cells; a matrix with zero total variance has no defined
    agreement and raises.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ValueError("rating matrix must be 2-dimensional")
    k, n = m.shape  # raters x items
    if k < 2 or n < 2:
        raise ValueError(f"need >= 2 raters and >= 2 items, got {k}x{n}")
    if np.isnan(m).any():
        raise ValueError("rating matrix has missing cells")

    grand = m.mean()
    item_means = m.mean(axis=0)
    rater_means = m.mean(axis=1)
    ss_items = k * float(((item_means - grand) ** 2).sum())
    ss_raters = n * float(((rater_means - grand) ** 2).sum())
    ss_total = float(((m - grand) ** 2).sum())
    ss_error = ss_total - ss_items - ss_raters

    msr = ss_items / (n - 1)
    msc = ss_raters / (k - 1)
    mse = ss_error / ((n - 1) * (k - 1))

    denom = msr + (k - 1) * mse + k * (msc - mse) / n
    if abs(denom) < 1e-15:
        raise UndefinedMetricError("zero total variance: agreement undefined")
    # The raw estimator can stray below -1 on adversarial small samples
    # (anti-agreeing raters); the reported coefficient stays in [-1, 1].
    return float(min(1.0, max(-1.0, (msr - mse) / denom)))


# --- expert reasonableness scaffold ----------------------------------------------

REASONABLENESS_BANDS = (
    (3.0, "conservative"),   # [1, 3)
    (5.0, "reasonable"),     # [3, 5]
    (7.0, "aggressive"),     # (5, 7]
)


@dataclass(frozen=True)
class ReasonablenessSummary:
    mean: float
    classification: str
    note: str = ""


def reasonableness_summary(scores: Sequence[float]) -> ReasonablenessSummary:
    """Mean 7-point rating with its conservative/reasonable/aggressive band.

    Scores run 1 (extremely conservative) to 7 (extremely aggressive); means
    below the scale midpoint inside the reasonable band are annotated as
    leaning conservative.
    """
    if not scores:
        raise ValueError("no scores")
    for s in scores:
        if not (1.0 <= s <= 7.0):
            raise ValueError(f"score out of [1, 7]: {s}")
    mean = float(np.mean(scores))
    if mean < 3.0:
        label = "conservative"
    elif mean <= 5.0:
        label = "reasonable"
    else:
        label = "aggressive"
    note = ""
    if label == "reasonable" and mean < 4.0:
        note = "slightly conservative"
    elif label == "reasonable" and mean > 4.0:
        note = "slightly aggressive"
    return ReasonablenessSummary(mean=mean, classification=label, note=note)
