"""End-to-end pipeline driver: data -> city encoder -> global model ->
per-city adaptation -> evaluation reports, with a replayable manifest.

Every artifact carries the config hash (JSON key, or a leading ``#`` comment
line in CSV/JSONL files), and a rerun from the manifest reproduces the
metrics report byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .adaptation import AdaptConfig, adapt_all
from .city_encoder import CityEncoderConfig, train_city_encoder
from .experiments import (
    FUSION_HIDDEN,
    evaluate,
    split_train_test,
    standardized_cities,
    train_global,
)
from .fusion import FusionParams, predict, zero_mobility
from .metrics import (
    SentimentSeries,
    accumulative_sentiment,
    label_distribution_report,
    sentiment_mobility_correlation,
)
from .records import Corpus, TweetRecord, validate_corpus
from .similarity import all_neighbor_sets
from .synth import SynthConfig, generate_synthetic


class ConfigError(Exception):
    """Bad or inconsistent run configuration (CLI exit code 2)."""


class DataError(Exception):
    """Input data fails validation (CLI exit code 3)."""


class NumericalError(Exception):
    """Training or evaluation failed numerically (CLI exit code 4)."""


@dataclass
class RunConfig:
    out_dir: str = "out"
    tweets_path: str | None = None
    cities_path: str | None = None
    seed: int = 0
    test_fraction: float = 0.25
    pure_text: bool = False
    global_only: bool = False
    stage1_epochs: int = 25
    stage2_epochs: int = 25
    batch_size: int = 64
    learning_rate: float = 1e-3
    synth: SynthConfig = field(default_factory=SynthConfig)
    encoder: CityEncoderConfig = field(default_factory=lambda: CityEncoderConfig(epochs=100))
    adapt: AdaptConfig = field(default_factory=lambda: AdaptConfig(k=3, epochs=60))

    def resolved_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out_dir")  # where outputs land never changes what they contain
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict, out_dir: str | None = None) -> "RunConfig":
        d = dict(d)
        synth = SynthConfig(**{**d.pop("synth", {}), })
        enc_kw = d.pop("encoder", {})
        if "hidden_sizes" in enc_kw and enc_kw["hidden_sizes"] is not None:
            enc_kw["hidden_sizes"] = tuple(enc_kw["hidden_sizes"])
        encoder = CityEncoderConfig(**enc_kw) if enc_kw else CityEncoderConfig(epochs=100)
        adapt_kw = d.pop("adapt", {})
        adapt = AdaptConfig(**adapt_kw) if adapt_kw else AdaptConfig(k=3, epochs=60)
        if out_dir is not None:
            d["out_dir"] = out_dir
        try:
            return cls(synth=synth, encoder=encoder, adapt=adapt, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _stamp(path: Path, config_hash: str) -> None:
    """Prepend the config-hash comment line to an existing CSV/JSONL artifact."""
    body = path.read_bytes()
    path.write_bytes(f"# config_hash={config_hash}\n".encode() + body)


def _write_hashed_csv(path: Path, header: list[str], rows, config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def load_and_validate_corpus(tweets_path, cities_path) -> Corpus:
    corpus = io.load_corpus(tweets_path, cities_path)
    violations = validate_corpus(corpus)
    if violations:
        lines = "; ".join(f"{v.subject_id}:{v.rule}" for v in violations[:10])
        raise DataError(f"{len(violations)} corpus violations (first: {lines})")
    return corpus


def mobility_proxy_by_day(records: list[TweetRecord], n_days: int) -> list[float | None]:
    """Per-day mobility level: mean over the day's tweets of the summed flow
    components, normalized by the city's series mean."""
    if not records:
        return [None] * n_days
    n_flow = min(3, len(records[0].mobility_features))
    sums = np.zeros(n_days)
    counts = np.zeros(n_days)
    for r in records:
        sums[r.day] += float(r.mobility_features[:n_flow].sum())
        counts[r.day] += 1
    daily = [sums[d] / counts[d] if counts[d] > 0 else None for d in range(n_days)]
    defined = [v for v in daily if v is not None]
    scale = np.mean(defined) if defined else 1.0
    if scale == 0:
        scale = 1.0
    return [None if v is None else v / scale for v in daily]


@dataclass
class PipelineResult:
    out_dir: Path
    metrics: dict
    manifest_path: Path


def run_pipeline(config: RunConfig) -> PipelineResult:
    t_start = time.time()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config.config_hash()

    # 1. corpus
    if config.tweets_path and config.cities_path:
        corpus = load_and_validate_corpus(config.tweets_path, config.cities_path)
    else:
        corpus, _truth = generate_synthetic(config.synth)
        io.save_corpus(corpus, out / "tweets.jsonl", out / "cities.csv")
        _stamp(out / "tweets.jsonl", chash)
        _stamp(out / "cities.csv", chash)
    d_t, d_m, _ = corpus.dims
    records = zero_mobility(corpus.tweets) if config.pure_text else corpus.tweets

    # 2-3. city encoder + index
    try:
        encoder, embeddings, _curve = train_city_encoder(standardized_cities(corpus), config.encoder)
    except (ValueError, FloatingPointError) as exc:
        raise NumericalError(f"city encoder training failed: {exc}") from exc
    io.save_checkpoint({"city_encoder": encoder}, out / "city_encoder.json", config_hash=chash)
    io.save_embeddings_csv(embeddings, out / "embeddings.csv")
    _stamp(out / "embeddings.csv", chash)
    io.save_neighbor_report_csv(
        all_neighbor_sets(embeddings, config.adapt.k), out / "neighbors.csv"
    )
    _stamp(out / "neighbors.csv", chash)

    # 4-5. global model
    rng = np.random.default_rng(config.seed + 1000)
    train, test = split_train_test(records, config.test_fraction, rng)
    if not train or not test:
        raise DataError("train/test split produced an empty side")
    try:
        global_model = train_global(
            train, d_t, d_m, config.seed,
            stage1_epochs=config.stage1_epochs, stage2_epochs=config.stage2_epochs,
        )
    except ValueError as exc:
        raise NumericalError(f"global training failed: {exc}") from exc
    io.save_checkpoint(global_model.groups(), out / "global_model.json", config_hash=chash)

    # 6. per-city adaptation
    metrics: dict = {"config_hash": chash, "models": {}}
    variant = "Pure-Text" if config.pure_text else "Fusion"
    metrics["models"][f"Global-{variant}"] = evaluate(global_model, test).as_dict()

    city_models: dict[str, FusionParams] = {}
    if not config.global_only:
        train_corpus = Corpus.build(train, corpus.cities)
        result = adapt_all(global_model, train_corpus, embeddings, config.adapt)
        if result.failures:
            raise NumericalError(f"adaptation failed for cities: {sorted(result.failures)}")
        city_models = result.checkpoints
        ckpt_dir = out / "city_checkpoints"
        ckpt_dir.mkdir(exist_ok=True)
        for city_id, params in sorted(city_models.items()):
            io.save_checkpoint(params.groups(), ckpt_dir / f"{city_id}.json", config_hash=chash)
        _write_hashed_csv(
            out / "augmentation_audit.csv",
            ["target_city", "source_city", "alpha", "records_used"],
            [(t, s, repr(a), n) for t, s, a, n in result.audit_rows],
            chash,
        )
        if result.skipped:
            (out / "adaptation_skipped.json").write_text(
                json.dumps({"config_hash": chash, "skipped": result.skipped}, sort_keys=True)
            )

        # city-specific evaluation: each test record scored by its city model
        preds = []
        for r in test:
            model = city_models.get(r.city_id, global_model)
            preds.append(predict(model, [r])[0][0])
        from .metrics import ConfusionMatrix, classification_metrics

        cm = ConfusionMatrix.from_labels([r.gold_label for r in test], preds)
        metrics["models"][f"City-Specific-{variant}"] = classification_metrics(cm).as_dict()

        # label distribution before/after augmentation
        by_city: dict[str, list[TweetRecord]] = {c: [] for c in corpus.cities}
        for r in train:
            by_city[r.city_id].append(r)
        after: dict[str, list[TweetRecord]] = {}
        from .adaptation import build_augmented_dataset, similarity_weights
        from .similarity import top_k

        for city_id in sorted(corpus.cities):
            ns = top_k(city_id, embeddings, config.adapt.k)
            alphas = similarity_weights(ns, config.adapt.gamma) if ns.neighbors else {}
            after[city_id] = build_augmented_dataset(city_id, train_corpus, ns, alphas).records
        dist_rows, dist_notes = label_distribution_report(by_city, after)
        _write_hashed_csv(
            out / "label_distribution.csv",
            ["city_id", "stage", "pos_pct", "neg_pct", "neu_pct"],
            [
                (c, stage, repr(s.pos_pct), repr(s.neg_pct), repr(s.neu_pct))
                for c, (b, a) in sorted(dist_rows.items())
                for stage, s in (("before", b), ("after", a))
            ],
            chash,
        )

    # 7-9. sentiment series + correlation from full-corpus predictions
    full_preds = []
    pred_rows = []
    for r in records:
        model = city_models.get(r.city_id, global_model)
        label, probs = predict(model, [r])[0]
        full_preds.append(label)
        pred_rows.append((r.tweet_id, r.city_id, label, probs[0], probs[1], probs[2]))
    with open(out / "predictions.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={chash}\n")
        w = csv.writer(fh)
        w.writerow(["tweet_id", "city_id", "pred_label", "p_neg", "p_neu", "p_pos"])
        for tid, cid, label, p0, p1, p2 in pred_rows:
            w.writerow([tid, cid, label, repr(p0), repr(p1), repr(p2)])

    n_days = corpus.day_range[1] + 1
    acc_rows = []
    corr_rows = []
    by_city_all: dict[str, list[tuple[TweetRecord, int]]] = {}
    for r, label in zip(records, full_preds):
        by_city_all.setdefault(r.city_id, []).append((r, label))
    for city_id in sorted(corpus.cities):
        pairs = by_city_all.get(city_id, [])
        pos = np.zeros(n_days, dtype=np.int64)
        neg = np.zeros(n_days, dtype=np.int64)
        for r, label in pairs:
            if label == 1:
                pos[r.day] += 1
            elif label == -1:
                neg[r.day] += 1
        series = SentimentSeries(pos=pos, neg=neg)
        acc = [accumulative_sentiment(series, t) for t in range(n_days)]
        for t, v in enumerate(acc):
            acc_rows.append((city_id, t, _fmt(v)))
        proxy = mobility_proxy_by_day([r for r, _ in pairs], n_days)
        try:
            c = sentiment_mobility_correlation(acc, proxy)
            corr_rows.append(
                (city_id, repr(c.slope), repr(c.intercept), repr(c.r_squared), repr(c.pearson_r), c.n)
            )
        except ValueError:
            pass  # city with too few defined days has no correlation row
    _write_hashed_csv(out / "acc_sentiment.csv", ["city_id", "day", "acc_sentiment"], acc_rows, chash)
    _write_hashed_csv(
        out / "correlation.csv",
        ["city_id", "slope", "intercept", "r2", "pearson_r", "n"],
        corr_rows,
        chash,
    )

    # 10. metrics + manifest
    metrics_path = out / "metrics.json"
    metrics_path.write_text(json.dumps(metrics, sort_keys=True))
    manifest = {
        "version": 1,
        "config": config.resolved_dict(),
        "config_hash": chash,
        "elapsed_seconds": round(time.time() - t_start, 3),
        "artifacts": sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json"),
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, default=str))
    return PipelineResult(out_dir=out, metrics=metrics, manifest_path=manifest_path)


def rerun_from_manifest(manifest_path, out_dir: str) -> PipelineResult:
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    config = RunConfig.from_dict(manifest["config"], out_dir=out_dir)
    return run_pipeline(config)
