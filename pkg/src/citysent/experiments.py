"""Seeded experiment presets: the directional comparisons (fusion vs pure
text, global vs city-specific, freeze vs unfreeze) on synthetic corpora.

These mirror the headline comparisons at desk scale. Reported numbers are
direction-only: synthetic data says which variant should win, not by how
much.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adaptation import AdaptConfig, adapt_city, build_augmented_dataset, similarity_weights
from .city_encoder import CityEncoderConfig, train_city_encoder
from .fusion import (
    FusionParams,
    StageConfig,
    init_fusion_params,
    predict,
    stage1_config,
    stage2_config,
    train_fusion,
    train_stage1,
    train_stage2,
    zero_mobility,
)
from .ingest import standardize
from .metrics import ClassificationReport, ConfusionMatrix, classification_metrics
from .records import CityStatic, Corpus, TweetRecord
from .similarity import top_k
from .synth import SynthConfig, generate_synthetic

FUSION_HIDDEN = dict(h_t=32, h_m=32, h_f=32)


def default_synth_preset(seed: int) -> SynthConfig:
    """Balanced corpus with a real mobility signal; the fusion-vs-pure-text bed."""
    return SynthConfig(
        seed=seed, n_cities=9, tweets_per_city_range=(40, 70), force_low_resource=False
    )


def low_resource_synth_preset(seed: int) -> SynthConfig:
    """12 cities, 3 bands; the first city of each band is starved to 10 gold
    tweets by the harness, leaving same-band donors."""
    return SynthConfig(
        seed=seed, n_cities=12, tweets_per_city_range=(40, 60), force_low_resource=False
    )


def freeze_synth_preset(seed: int) -> SynthConfig:
    """Noisy text and very scarce gold: the regime where unfreezing encoders
    during refinement can wreck the pretrained representation."""
    return SynthConfig(
        seed=seed,
        n_cities=9,
        tweets_per_city_range=(40, 60),
        force_low_resource=False,
        label_noise_rate=0.4,
        text_noise=1.8,
        mobility_noise=1.0,
    )


# ---------------------------------------------------------------- shared plumbing

def macro_f1(params: FusionParams, test: list[TweetRecord]) -> float:
    preds = [label for label, _ in predict(params, test)]
    cm = ConfusionMatrix.from_labels([r.gold_label for r in test], preds)
    return classification_metrics(cm).macro_f1


def evaluate(params: FusionParams, test: list[TweetRecord]) -> ClassificationReport:
    preds = [label for label, _ in predict(params, test)]
    cm = ConfusionMatrix.from_labels([r.gold_label for r in test], preds)
    return classification_metrics(cm)


def split_train_test(records, test_fraction: float, rng: np.random.Generator):
    idx = rng.permutation(len(records))
    n_test = int(len(records) * test_fraction)
    return [records[i] for i in idx[n_test:]], [records[i] for i in idx[:n_test]]


def standardized_cities(corpus: Corpus) -> list[CityStatic]:
    ids = sorted(corpus.cities)
    feats = np.stack([corpus.cities[c].features for c in ids])
    std, _ = standardize(feats)
    return [
        CityStatic(
            city_id=c,
            features=f,
            risk=corpus.cities[c].risk,
            population=corpus.cities[c].population,
            urban=corpus.cities[c].urban,
        )
        for c, f in zip(ids, std)
    ]


def train_global(
    train: list[TweetRecord],
    d_t: int,
    d_m: int,
    seed: int,
    stage1_epochs: int = 25,
    stage2_epochs: int = 25,
) -> FusionParams:
    params = init_fusion_params(d_t, d_m, np.random.default_rng(seed), **FUSION_HIDDEN)
    p1, _ = train_stage1(params, train, stage1_config(epochs=stage1_epochs, seed=seed))
    p2, _ = train_stage2(p1, train, stage2_config(epochs=stage2_epochs, seed=seed))
    return p2


# ---------------------------------------------------------------- comparisons

def run_global_comparison(seeds=range(5)) -> list[dict]:
    """Global-Fusion vs Global-Pure-Text held-out macro-F1 per seed."""
    rows = []
    for seed in seeds:
        cfg = default_synth_preset(seed)
        corpus, _ = generate_synthetic(cfg)
        out = {"seed": seed}
        for variant, records in (
            ("fusion", corpus.tweets),
            ("pure_text", zero_mobility(corpus.tweets)),
        ):
            rng = np.random.default_rng(seed + 1000)
            train, test = split_train_test(records, 0.25, rng)
            model = train_global(train, cfg.d_t, cfg.d_m, seed)
            out[variant] = macro_f1(model, test)
        rows.append(out)
    return rows


def run_adaptation_comparison(seeds=range(5), pure_text: bool = False) -> list[dict]:
    """Global vs city-specific macro-F1 medians over starved target cities.

    Per seed: 3 low-resource targets keep only 10 gold tweets for training;
    the rest of their tweets are held out. Donor cities share the target's
    risk band by construction.
    """
    rows = []
    for seed in seeds:
        cfg = low_resource_synth_preset(seed)
        corpus, _ = generate_synthetic(cfg)
        records = zero_mobility(corpus.tweets) if pure_text else corpus.tweets
        rng = np.random.default_rng(seed + 500)
        targets = sorted(corpus.cities)[:3]
        by_city: dict[str, list[TweetRecord]] = {}
        for r in records:
            by_city.setdefault(r.city_id, []).append(r)
        train: list[TweetRecord] = []
        test_by_target: dict[str, list[TweetRecord]] = {}
        for city, recs in sorted(by_city.items()):
            if city in targets:
                idx = rng.permutation(len(recs))
                train += [recs[i] for i in idx[:10]]
                test_by_target[city] = [recs[i] for i in idx[10:]]
            else:
                train += recs
        train_corpus = Corpus.build(train, corpus.cities)

        _, embeddings, _ = train_city_encoder(
            standardized_cities(corpus), CityEncoderConfig(epochs=100, seed=seed)
        )
        global_model = train_global(train, cfg.d_t, cfg.d_m, seed)
        acfg = AdaptConfig(k=3, gamma=5.0, epochs=60, seed=seed)
        global_f1s, adapted_f1s = [], []
        for target in targets:
            neighbors = top_k(target, embeddings, acfg.k)
            alphas = similarity_weights(neighbors, acfg.gamma)
            dataset = build_augmented_dataset(target, train_corpus, neighbors, alphas)
            adapted, _ = adapt_city(global_model, dataset, acfg)
            global_f1s.append(macro_f1(global_model, test_by_target[target]))
            adapted_f1s.append(macro_f1(adapted, test_by_target[target]))
        rows.append(
            {
                "seed": seed,
                "global": float(np.median(global_f1s)),
                "city_specific": float(np.median(adapted_f1s)),
            }
        )
    return rows


def run_freeze_comparison(seeds=range(5)) -> list[dict]:
    """Stage-2 refinement with encoders frozen vs everything unfrozen."""
    rows = []
    for seed in seeds:
        cfg = freeze_synth_preset(seed)
        corpus, _ = generate_synthetic(cfg)
        rng = np.random.default_rng(seed + 500)
        train, test = split_train_test(corpus.tweets, 0.25, rng)
        gold_subset = train[:15]
        base = init_fusion_params(cfg.d_t, cfg.d_m, np.random.default_rng(seed), **FUSION_HIDDEN)
        p1, _ = train_stage1(base, train, stage1_config(epochs=25, seed=seed))
        common = dict(epochs=150, learning_rate=3e-3, seed=seed)
        frozen, _ = train_fusion(
            p1,
            gold_subset,
            StageConfig("gold_refine", "gold_label", {"theta_t_pooler", "theta_m"}, **common),
        )
        unfrozen, _ = train_fusion(
            p1, gold_subset, StageConfig("gold_refine", "gold_label", set(), **common)
        )
        rows.append(
            {
                "seed": seed,
                "freeze_encoders": macro_f1(frozen, test),
                "unfreeze_all": macro_f1(unfrozen, test),
            }
        )
    return rows


def run_ablation(seeds=range(5)) -> dict[str, float]:
    """Comparison table over input and training-strategy variants.

    Returns median held-out macro-F1 per variant row.
    """
    table: dict[str, list[float]] = {
        "Global-Fusion": [],
        "Global-Pure-Text": [],
        "City-Specific-Fusion": [],
        "City-Specific-Pure-Text": [],
        "Stage2-Freeze-Encoders": [],
        "Stage2-Unfreeze-All": [],
    }
    for row in run_global_comparison(seeds):
        table["Global-Fusion"].append(row["fusion"])
        table["Global-Pure-Text"].append(row["pure_text"])
    for row in run_adaptation_comparison(seeds):
        table["City-Specific-Fusion"].append(row["city_specific"])
    for row in run_adaptation_comparison(seeds, pure_text=True):
        table["City-Specific-Pure-Text"].append(row["city_specific"])
    for row in run_freeze_comparison(seeds):
        table["Stage2-Freeze-Encoders"].append(row["freeze_encoders"])
        table["Stage2-Unfreeze-All"].append(row["unfreeze_all"])
    return {name: float(np.median(vals)) for name, vals in table.items()}
