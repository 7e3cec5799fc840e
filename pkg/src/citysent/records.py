"""Core domain types: tweets, cities, corpora, OD trips, annotation tables.

Sentiment labels are plain ints in {-1, 0, 1}; `check_label` is the single
gatekeeper. Corpus-level consistency (dimensions, finiteness, referential
integrity) is *not* enforced at construction -- `validate_corpus` reports it
as data, so loaders can surface every problem at once instead of dying on
the first bad row.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

VALID_LABELS = (-1, 0, 1)

# class index order used everywhere downstream: negative, neutral, positive
LABEL_TO_INDEX = {-1: 0, 0: 1, 1: 2}
INDEX_TO_LABEL = {0: -1, 1: 0, 2: 1}


def check_label(value: int) -> int:
    """Validate a sentiment label; raises ValueError outside {-1, 0, 1}."""
    if value not in VALID_LABELS:
        raise ValueError(f"sentiment label must be one of {VALID_LABELS}, got {value!r}")
    return int(value)


def _as_f64(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64)


@dataclass
class TweetRecord:
    tweet_id: str
    city_id: str
    day: int
    text_embedding: np.ndarray
    mobility_features: np.ndarray
    weak_label: Optional[int] = None
    gold_label: Optional[int] = None
    weight: float = 1.0

    def __post_init__(self):
        self.text_embedding = _as_f64(self.text_embedding)
        self.mobility_features = _as_f64(self.mobility_features)
        if self.weak_label is not None:
            self.weak_label = check_label(self.weak_label)
        if self.gold_label is not None:
            self.gold_label = check_label(self.gold_label)
        self.day = int(self.day)
        self.weight = float(self.weight)

    def __eq__(self, other):
        if not isinstance(other, TweetRecord):
            return NotImplemented
        return (
            self.tweet_id == other.tweet_id
            and self.city_id == other.city_id
            and self.day == other.day
            and np.array_equal(self.text_embedding, other.text_embedding)
            and np.array_equal(self.mobility_features, other.mobility_features)
            and self.weak_label == other.weak_label
            and self.gold_label == other.gold_label
            and self.weight == other.weight
        )

    def with_weight(self, weight: float) -> "TweetRecord":
        return replace(self, weight=weight)


@dataclass
class CityStatic:
    city_id: str
    features: np.ndarray
    risk: float
    population: int
    urban: bool

    def __post_init__(self):
        self.features = _as_f64(self.features)
        self.risk = float(self.risk)
        self.population = int(self.population)
        self.urban = bool(self.urban)

    def __eq__(self, other):
        if not isinstance(other, CityStatic):
            return NotImplemented
        return (
            self.city_id == other.city_id
            and np.array_equal(self.features, other.features)
            and self.risk == other.risk
            and self.population == other.population
            and self.urban == other.urban
        )


@dataclass
class ODRecord:
    origin_tract: str
    dest_tract: str
    day: int
    trips: int

    def __post_init__(self):
        self.day = int(self.day)
        self.trips = int(self.trips)
        if self.trips < 0:
            raise ValueError(f"trips must be >= 0, got {self.trips}")


@dataclass
class AnnotationTable:
    """Two-annotator nominal label matrix, one row per item."""

    labels: np.ndarray  # (N, 2) ints in {-1, 0, 1}

    def __post_init__(self):
        arr = np.asarray(self.labels, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"annotation table must be N x 2, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise ValueError("annotation table needs at least 2 items")
        for v in np.unique(arr):
            check_label(int(v))
        self.labels = arr

    @property
    def n_items(self) -> int:
        return self.labels.shape[0]


@dataclass
class Corpus:
    tweets: list[TweetRecord]
    cities: dict[str, CityStatic]
    dims: tuple[int, int, int]  # (D_t, D_m, D)
    day_range: tuple[int, int]

    @classmethod
    def build(cls, tweets: list[TweetRecord], cities: dict[str, CityStatic]) -> "Corpus":
        """Derive dims and day_range from the data; use validate_corpus to check them."""
        d_t = len(tweets[0].text_embedding) if tweets else 0
        d_m = len(tweets[0].mobility_features) if tweets else 0
        d = len(next(iter(cities.values())).features) if cities else 0
        if tweets:
            days = [t.day for t in tweets]
            day_range = (min(days), max(days))
        else:
            day_range = (0, 0)
        return cls(tweets=tweets, cities=cities, dims=(d_t, d_m, d), day_range=day_range)

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self.tweets == other.tweets
            and self.cities == other.cities
            and self.dims == other.dims
            and self.day_range == other.day_range
        )


@dataclass(frozen=True)
class Violation:
    subject_id: str
    rule: str
    detail: str = ""


def validate_corpus(corpus: Corpus) -> list[Violation]:
    """Check every corpus invariant; returns one Violation per broken rule.

    Pure: never mutates the corpus and never raises on bad data.
    """
    out: list[Violation] = []
    d_t, d_m, d = corpus.dims
    for t in corpus.tweets:
        if t.city_id not in corpus.cities:
            out.append(Violation(t.tweet_id, "unknown_city", f"city_id={t.city_id!r}"))
        if len(t.text_embedding) != d_t:
            out.append(
                Violation(t.tweet_id, "text_embedding_dim", f"expected {d_t}, got {len(t.text_embedding)}")
            )
        if len(t.mobility_features) != d_m:
            out.append(
                Violation(t.tweet_id, "mobility_dim", f"expected {d_m}, got {len(t.mobility_features)}")
            )
        if not np.all(np.isfinite(t.text_embedding)):
            out.append(Violation(t.tweet_id, "non_finite_text_embedding"))
        if not np.all(np.isfinite(t.mobility_features)):
            out.append(Violation(t.tweet_id, "non_finite_mobility"))
        if t.day < 0:
            out.append(Violation(t.tweet_id, "negative_day", f"day={t.day}"))
        if not (t.weight >= 0 and np.isfinite(t.weight)):
            out.append(Violation(t.tweet_id, "bad_weight", f"weight={t.weight}"))
    for c in corpus.cities.values():
        if len(c.features) != d:
            out.append(Violation(c.city_id, "city_feature_dim", f"expected {d}, got {len(c.features)}"))
        if not np.all(np.isfinite(c.features)):
            out.append(Violation(c.city_id, "non_finite_city_features"))
        if not (0.0 <= c.risk <= 5.0):
            out.append(Violation(c.city_id, "risk_out_of_range", f"risk={c.risk}"))
        if c.population < 0:
            out.append(Violation(c.city_id, "negative_population", f"population={c.population}"))
    return out
