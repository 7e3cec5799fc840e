import numpy as np
import pytest

from citysent.records import CityStatic, Corpus, TweetRecord


def make_record(i: int, rng: np.random.Generator, city: str = "c0", d_t: int = 5, d_m: int = 3, **kw):
    defaults = dict(
        tweet_id=f"t{i}",
        city_id=city,
        day=int(rng.integers(0, 10)),
        text_embedding=rng.normal(size=d_t),
        mobility_features=rng.normal(size=d_m),
        weak_label=int(rng.integers(3)) - 1,
        gold_label=int(rng.integers(3)) - 1,
    )
    defaults.update(kw)
    return TweetRecord(**defaults)


def make_cities(n: int, rng: np.random.Generator, d: int = 6) -> list[CityStatic]:
    return [
        CityStatic(
            city_id=f"c{i}",
            features=rng.normal(size=d),
            risk=float(rng.uniform(0.0, 5.0)),
            population=int(rng.integers(1_000, 50_000)),
            urban=bool(i % 2),
        )
        for i in range(n)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_corpus(rng):
    cities = {c.city_id: c for c in make_cities(5, rng)}
    tweets = [make_record(i, rng, city=f"c{i % 5}") for i in range(40)]
    return Corpus.build(tweets, cities)
