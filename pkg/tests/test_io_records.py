import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from citysent import io
from citysent.nn import init_mlp
from citysent.records import (
    CityStatic,
    Corpus,
    TweetRecord,
    Violation,
    check_label,
    validate_corpus,
)
from citysent.synth import SynthConfig, generate_synthetic


# ---------------------------------------------------------------- labels

def test_check_label():
    assert [check_label(v) for v in (-1, 0, 1)] == [-1, 0, 1]
    for bad in (2, -2, 5):
        with pytest.raises(ValueError):
            check_label(bad)


def test_tweet_record_coerces_and_validates():
    r = TweetRecord("t", "c", day="3", text_embedding=[1, 2], mobility_features=[0.5], weak_label=1)
    assert r.day == 3
    assert r.text_embedding.dtype == np.float64
    with pytest.raises(ValueError):
        TweetRecord("t", "c", 0, [1.0], [1.0], gold_label=2)


# ---------------------------------------------------------------- validation

def base_corpus():
    cities = {"c0": CityStatic("c0", [1.0, 2.0], 2.5, 1000, True)}
    tweets = [TweetRecord("t0", "c0", 0, [1.0, 2.0, 3.0], [0.5], gold_label=1)]
    return Corpus.build(tweets, cities)


def test_validate_clean_corpus():
    assert validate_corpus(base_corpus()) == []


@pytest.mark.parametrize(
    "mutate, rule",
    [
        (lambda c: setattr(c.tweets[0], "city_id", "ghost"), "unknown_city"),
        (lambda c: setattr(c.tweets[0], "text_embedding", np.array([np.nan, 1.0, 2.0])), "non_finite_text_embedding"),
        (lambda c: setattr(c.tweets[0], "mobility_features", np.array([np.inf])), "non_finite_mobility"),
        (lambda c: setattr(c.tweets[0], "day", -1), "negative_day"),
        (lambda c: setattr(c.tweets[0], "weight", -0.5), "bad_weight"),
        (lambda c: setattr(c.cities["c0"], "risk", 9.0), "risk_out_of_range"),
        (lambda c: setattr(c.cities["c0"], "population", -5), "negative_population"),
        (lambda c: setattr(c.cities["c0"], "features", np.array([np.nan, 0.0])), "non_finite_city_features"),
    ],
)
def test_validate_flags_each_rule(mutate, rule):
    corpus = base_corpus()
    mutate(corpus)
    assert rule in {v.rule for v in validate_corpus(corpus)}


def test_validate_flags_dimension_mismatch():
    corpus = base_corpus()
    corpus.tweets.append(TweetRecord("t1", "c0", 0, [1.0], [0.5, 0.5], gold_label=0))
    rules = {v.rule for v in validate_corpus(corpus)}
    assert "text_embedding_dim" in rules and "mobility_dim" in rules


def test_validate_never_mutates():
    corpus = base_corpus()
    corpus.tweets[0].day = -3
    before = corpus.tweets[0].day
    validate_corpus(corpus)
    assert corpus.tweets[0].day == before


# ---------------------------------------------------------------- round trips

def test_corpus_round_trip(tmp_path):
    corpus, _ = generate_synthetic(SynthConfig(seed=7, n_cities=5))
    io.save_corpus(corpus, tmp_path / "tweets.jsonl", tmp_path / "cities.csv")
    back = io.load_corpus(tmp_path / "tweets.jsonl", tmp_path / "cities.csv")
    assert back == corpus


labels_opt = st.none() | st.sampled_from([-1, 0, 1])


@given(
    st.lists(
        st.tuples(
            st.integers(0, 30),
            labels_opt,
            labels_opt,
            st.floats(0, 5, allow_nan=False),
        ),
        min_size=1,
        max_size=10,
    ),
    st.randoms(),
)
@settings(max_examples=25, deadline=None)
def test_tweets_round_trip_property(rows, rnd):
    recs = [
        TweetRecord(
            tweet_id=f"t{i}",
            city_id=f"c{i % 3}",
            day=day,
            text_embedding=[rnd.uniform(-5, 5) for _ in range(4)],
            mobility_features=[rnd.uniform(-5, 5) for _ in range(2)],
            weak_label=weak,
            gold_label=gold,
            weight=w,
        )
        for i, (day, weak, gold, w) in enumerate(rows)
    ]
    import tempfile, pathlib

    with tempfile.TemporaryDirectory() as d:
        p = pathlib.Path(d) / "t.jsonl"
        io.save_tweets_jsonl(recs, p)
        assert io.load_tweets_jsonl(p) == recs


def test_loaders_skip_comment_lines(tmp_path):
    corpus, _ = generate_synthetic(SynthConfig(seed=8, n_cities=5))
    tp, cp = tmp_path / "t.jsonl", tmp_path / "c.csv"
    io.save_corpus(corpus, tp, cp)
    for p in (tp, cp):
        p.write_text("# config_hash=deadbeef\n" + p.read_text())
    assert io.load_corpus(tp, cp) == corpus


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    groups = {
        "theta_f": init_mlp([4, 3], ["relu"], rng),
        "theta_c": init_mlp([3, 3], ["identity"], rng),
    }
    groups["theta_f"].frozen = True
    path = tmp_path / "ckpt.json"
    io.save_checkpoint(groups, path, config_hash="abc123")
    back = io.load_checkpoint(path)
    assert set(back) == set(groups)
    for name in groups:
        assert io.mlp_bytes(back[name]) == io.mlp_bytes(groups[name])


def test_checkpoint_canonical_bytes(tmp_path):
    rng = np.random.default_rng(1)
    m = init_mlp([3, 2], ["tanh"], rng)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    io.save_checkpoint({"g": m}, p1)
    io.save_checkpoint({"g": m.copy()}, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other", "version": 1, "groups": {}}')
    with pytest.raises(ValueError):
        io.load_checkpoint(p)
    p.write_text('{"format": "citysent-checkpoint", "version": 99, "groups": {}}')
    with pytest.raises(ValueError):
        io.load_checkpoint(p)


def test_embeddings_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    emb = {f"c{i}": rng.normal(size=5) for i in range(4)}
    p = tmp_path / "emb.csv"
    io.save_embeddings_csv(emb, p)
    back = io.load_embeddings_csv(p)
    assert set(back) == set(emb)
    for c in emb:
        np.testing.assert_array_equal(back[c], emb[c])


def test_cities_csv_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("foo,bar\n1,2\n")
    with pytest.raises(ValueError):
        io.load_cities_csv(p)


def test_od_and_crosswalk_and_annotations(tmp_path):
    odp = tmp_path / "od.csv"
    odp.write_text("origin_tract,dest_tract,day,trips\nt1,t2,0,7\n")
    recs = io.load_od_csv(odp)
    assert recs[0].trips == 7

    cwp = tmp_path / "cw.csv"
    cwp.write_text("tract_id,city_id,population\nt1,cityA,100\nt2,cityB,200\n")
    cw = io.load_crosswalk_csv(cwp)
    assert cw["t1"] == ("cityA", 100)
    cwp.write_text("tract_id,city_id,population\nt1,cityA,100\nt1,cityB,200\n")
    with pytest.raises(ValueError):
        io.load_crosswalk_csv(cwp)

    ap = tmp_path / "ann.csv"
    ap.write_text("annotator_a,annotator_b\n1,1\n0,-1\n")
    table = io.load_annotations_csv(ap)
    assert table.n_items == 2
