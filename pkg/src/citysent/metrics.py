"""Evaluation and analysis: classification metrics, accumulative sentiment,
sentiment-mobility correlation, Krippendorff's alpha, label distributions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .records import LABEL_TO_INDEX, AnnotationTable, TweetRecord

CLASS_ORDER = ("negative", "neutral", "positive")  # index order 0, 1, 2


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (3, 3), rows true, columns predicted

    def __post_init__(self):
        arr = np.asarray(self.counts, dtype=np.int64)
        if arr.shape != (3, 3):
            raise ValueError(f"confusion matrix must be 3x3, got {arr.shape}")
        if (arr < 0).any():
            raise ValueError("confusion counts must be >= 0")
        self.counts = arr

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_labels(cls, true_labels, pred_labels) -> "ConfusionMatrix":
        counts = np.zeros((3, 3), dtype=np.int64)
        for t, p in zip(true_labels, pred_labels, strict=True):
            counts[LABEL_TO_INDEX[t], LABEL_TO_INDEX[p]] += 1
        return cls(counts)


@dataclass
class ClassificationReport:
    accuracy: float
    macro_recall: float
    macro_f1: float
    per_class_f1: tuple[float, float, float]  # (negative, neutral, positive)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "f1_negative": self.per_class_f1[0],
            "f1_neutral": self.per_class_f1[1],
            "f1_positive": self.per_class_f1[2],
        }


def classification_metrics(cm: ConfusionMatrix) -> ClassificationReport:
    """Accuracy, macro recall, macro F1, and class-wise F1; 0/0 ratios are 0."""
    c = cm.counts.astype(np.float64)
    total = c.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")

    def safe_div(num, den):
        return num / den if den > 0 else 0.0

    recalls, precisions, f1s = [], [], []
    for k in range(3):
        r = safe_div(c[k, k], c[k, :].sum())
        p = safe_div(c[k, k], c[:, k].sum())
        recalls.append(r)
        precisions.append(p)
        f1s.append(safe_div(2 * p * r, p + r))
    return ClassificationReport(
        accuracy=float(np.trace(c) / total),
        macro_recall=float(np.mean(recalls)),
        macro_f1=float(np.mean(f1s)),
        per_class_f1=tuple(f1s),
    )


# ---------------------------------------------------------------- accumulative sentiment

@dataclass
class SentimentSeries:
    """Per-day positive/negative tweet counts for one city, day 0 onward."""

    pos: np.ndarray
    neg: np.ndarray

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=np.int64)
        self.neg = np.asarray(self.neg, dtype=np.int64)
        if self.pos.shape != self.neg.shape or self.pos.ndim != 1:
            raise ValueError("pos and neg must be 1-D and equal length")
        if (self.pos < 0).any() or (self.neg < 0).any():
            raise ValueError("counts must be >= 0")

    def __len__(self) -> int:
        return len(self.pos)


def accumulative_sentiment(series: SentimentSeries, t: int) -> Optional[float]:
    """Running (sum pos - sum neg) / (sum pos + sum neg) through day t.

    Returns None when no polar tweets exist yet: a fabricated 0 would read as
    genuine neutrality.
    """
    if not 0 <= t < len(series):
        raise IndexError(f"day {t} outside series of length {len(series)}")
    pos = int(series.pos[: t + 1].sum())
    neg = int(series.neg[: t + 1].sum())
    if pos + neg == 0:
        return None
    return (pos - neg) / (pos + neg)


def sentiment_series_from_predictions(records: list[TweetRecord], labels, n_days: int) -> SentimentSeries:
    pos = np.zeros(n_days, dtype=np.int64)
    neg = np.zeros(n_days, dtype=np.int64)
    for r, label in zip(records, labels, strict=True):
        if label == 1:
            pos[r.day] += 1
        elif label == -1:
            neg[r.day] += 1
    return SentimentSeries(pos=pos, neg=neg)


# ---------------------------------------------------------------- correlation

@dataclass
class CorrelationResult:
    slope: float
    intercept: float
    r_squared: float
    pearson_r: float
    n: int


def sentiment_mobility_correlation(sentiment, mobility) -> CorrelationResult:
    """OLS of mobility on sentiment, plus Pearson r.

    Days with undefined sentiment (None) are dropped pairwise.
    """
    pairs = [
        (s, m) for s, m in zip(sentiment, mobility, strict=True) if s is not None and m is not None
    ]
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 defined pairs, have {len(pairs)}")
    x = np.array([p[0] for p in pairs], dtype=np.float64)
    y = np.array([p[1] for p in pairs], dtype=np.float64)
    if np.var(x) == 0.0:
        raise ValueError("zero variance in sentiment; slope undefined")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    if np.var(y) == 0.0:
        pearson = 0.0
    else:
        pearson = float(np.corrcoef(x, y)[0, 1])
    return CorrelationResult(
        slope=float(slope), intercept=float(intercept), r_squared=r2, pearson_r=pearson, n=len(pairs)
    )


# ---------------------------------------------------------------- inter-annotator agreement

def krippendorff_alpha(table: AnnotationTable) -> float:
    """Nominal-data alpha = 1 - D_o / D_e for two annotators.

    D_o is the per-item disagreement rate; D_e is the chance disagreement
    from pooled category proportions.
    """
    labels = table.labels
    n = labels.shape[0]
    d_o = float(np.mean(labels[:, 0] != labels[:, 1]))
    pooled = labels.ravel()
    categories, counts = np.unique(pooled, return_counts=True)
    if len(categories) < 2:
        raise ValueError("alpha undefined with a single category (D_e = 0)")
    p = counts / counts.sum()
    d_e = float(1.0 - (p**2).sum())  # = sum over c1 != c2 of p(c1) p(c2)
    return 1.0 - d_o / d_e


# ---------------------------------------------------------------- label distributions

@dataclass
class LabelShare:
    pos_pct: float
    neg_pct: float
    neu_pct: float


def label_shares(records: list[TweetRecord], label_source: str = "gold_label", weighted: bool = False):
    """Percentage split over labeled records; None when no labels exist."""
    totals = {1: 0.0, -1: 0.0, 0: 0.0}
    for r in records:
        label = getattr(r, label_source)
        if label is None:
            continue
        totals[label] += r.weight if weighted else 1.0
    grand = sum(totals.values())
    if grand == 0:
        return None
    return LabelShare(
        pos_pct=100.0 * totals[1] / grand,
        neg_pct=100.0 * totals[-1] / grand,
        neu_pct=100.0 * totals[0] / grand,
    )


def label_distribution_report(
    before: dict[str, list[TweetRecord]],
    after: dict[str, list[TweetRecord]],
    label_source: str = "gold_label",
):
    """Per-city (before, after) label shares; augmented shares are weighted by
    record weight. Cities with zero labeled records are reported in the notes."""
    rows: dict[str, tuple[LabelShare, LabelShare]] = {}
    notes: list[str] = []
    for city in sorted(set(before) | set(after)):
        b = label_shares(before.get(city, []), label_source, weighted=False)
        a = label_shares(after.get(city, []), label_source, weighted=True)
        if b is None or a is None:
            notes.append(f"{city}: no labeled records")
            continue
        rows[city] = (b, a)
    return rows, notes
