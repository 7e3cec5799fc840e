"""Command-line front end.

Subcommands: synth, ingest, vif, train-cities, index, train-global, adapt,
evaluate, acc-sentiment, correlate, ablation, pipeline.

Exit codes: 0 success, 2 config error, 3 data validation error, 4 numerical
failure. The CITYSENT_OUTDIR environment variable overrides any configured
output directory; ``--seed`` overrides the configured seed everywhere.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .adaptation import AdaptConfig, adapt_all
from .city_encoder import CityEncoderConfig, train_city_encoder
from .experiments import (
    evaluate,
    run_ablation,
    run_adaptation_comparison,
    run_freeze_comparison,
    run_global_comparison,
    standardized_cities,
    train_global,
)
from .fusion import FusionParams, predict, zero_mobility
from .ingest import filter_od, od_to_city_mobility, vif_screen
from .metrics import SentimentSeries, accumulative_sentiment, sentiment_mobility_correlation
from .pipeline import (
    ConfigError,
    DataError,
    NumericalError,
    RunConfig,
    load_and_validate_corpus,
    mobility_proxy_by_day,
    rerun_from_manifest,
    run_pipeline,
)
from .records import validate_corpus
from .similarity import all_neighbor_sets
from .synth import SynthConfig, generate_synthetic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

OUTDIR_ENV = "CITYSENT_OUTDIR"


def _coerce(value: str, target_type):
    if target_type is bool:
        return value.strip().lower() in ("1", "true", "yes", "on")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    if target_type in (tuple, "tuple"):
        return tuple(int(x) for x in value.split(","))
    return value


def _apply_section(obj, section: configparser.SectionProxy):
    hints = {f.name: f for f in dataclasses.fields(obj)}
    for key, raw in section.items():
        if key not in hints:
            raise ConfigError(f"unknown config key {key!r} in section [{section.name}]")
        current = getattr(obj, key)
        if isinstance(current, bool):
            value = _coerce(raw, bool)
        elif isinstance(current, int):
            value = _coerce(raw, int)
        elif isinstance(current, float):
            value = _coerce(raw, float)
        elif isinstance(current, tuple):
            value = _coerce(raw, tuple)
        elif current is None:
            # optional numeric/string fields: try float, fall back to string
            try:
                value = float(raw)
            except ValueError:
                value = raw
        else:
            value = raw
        setattr(obj, key, value)


def load_run_config(path: str | None) -> RunConfig:
    """Flat INI config: [run] for top-level fields, [synth], [encoder], [adapt]."""
    config = RunConfig()
    if path is None:
        return config
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    section_targets = {
        "run": config,
        "synth": config.synth,
        "encoder": config.encoder,
        "adapt": config.adapt,
    }
    for name in parser.sections():
        if name not in section_targets:
            raise ConfigError(f"unknown config section [{name}]")
        _apply_section(section_targets[name], parser[name])
    return config


def _resolve_out(args) -> Path:
    out = os.environ.get(OUTDIR_ENV) or getattr(args, "out", None) or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> int:
    out = _resolve_out(args)
    cfg = load_run_config(args.config).synth
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        corpus, _truth = generate_synthetic(cfg)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    io.save_corpus(corpus, out / "tweets.jsonl", out / "cities.csv")
    print(f"wrote {len(corpus.tweets)} tweets, {len(corpus.cities)} cities to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    tweets = io.load_tweets_jsonl(args.tweets)
    if args.cities:
        cities = io.load_cities_csv(args.cities)
    else:
        # no city table: fabricate neutral entries so tweet-level checks still run
        ids = sorted({t.city_id for t in tweets})
        from .records import CityStatic

        cities = {c: CityStatic(c, [], 0.0, 0, False) for c in ids}
    from .records import Corpus

    corpus = Corpus.build(tweets, cities)
    violations = validate_corpus(corpus)
    for v in violations:
        print(f"{v.subject_id}: {v.rule} {v.detail}".rstrip())
    print(f"{len(violations)} violations in {len(tweets)} tweets / {len(cities)} cities")
    if args.od and args.crosswalk:
        od = filter_od(io.load_od_csv(args.od), args.min_trips)
        mobility = od_to_city_mobility(od, io.load_crosswalk_csv(args.crosswalk))
        out = _resolve_out(args)
        with open(out / "city_mobility.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["city_id", "day", "total_outflow", "total_inflow", "intra_city_trips", "log1p_total_flow"])
            for (city, day), vec in sorted(mobility.items()):
                w.writerow([city, day] + [repr(x) for x in vec.tolist()])
        print(f"wrote city mobility features for {len(mobility)} (city, day) pairs")
    return EXIT_DATA if violations else EXIT_OK


def cmd_vif(args) -> int:
    with open(args.features, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        names = next(reader)
        try:
            matrix = np.array([[float(x) for x in row] for row in reader])
        except ValueError as exc:
            print(f"data error: non-numeric feature value ({exc})", file=sys.stderr)
            return EXIT_DATA
    core_names = set(args.core.split(",")) if args.core else set()
    unknown = core_names - set(names)
    if unknown:
        print(f"config error: core columns not in header: {sorted(unknown)}", file=sys.stderr)
        return EXIT_CONFIG
    core_mask = np.array([n in core_names for n in names])
    try:
        survivors, log_rows = vif_screen(matrix, core_mask, args.threshold, column_names=names)
    except ValueError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = _resolve_out(args)
    io.save_vif_log_csv(log_rows, out / "vif_log.csv")
    print(f"retained {len(survivors)} of {len(names)} columns: {[names[i] for i in survivors]}")
    return EXIT_OK


def cmd_train_cities(args) -> int:
    run = load_run_config(args.config)
    if args.seed is not None:
        run.encoder.seed = args.seed
    corpus = load_and_validate_corpus(args.tweets, args.cities) if args.tweets else None
    cities = (
        standardized_cities(corpus)
        if corpus is not None
        else standardized_cities_from_csv(args.cities)
    )
    if args.restrict:
        keep = set(args.restrict.split(","))
        cities = [c for c in cities if c.city_id in keep]
    encoder, embeddings, curve = train_city_encoder(cities, run.encoder)
    out = _resolve_out(args)
    io.save_checkpoint({"city_encoder": encoder}, out / "city_encoder.json")
    io.save_embeddings_csv(embeddings, out / "embeddings.csv")
    print(f"trained on {len(cities)} cities; final epoch loss {curve[-1]:.4f}" if curve else "no epochs run")
    return EXIT_OK


def standardized_cities_from_csv(path):
    from .records import Corpus

    cities = io.load_cities_csv(path)
    return standardized_cities(Corpus.build([], cities))


def cmd_index(args) -> int:
    embeddings = io.load_embeddings_csv(args.embeddings)
    out = _resolve_out(args)
    io.save_neighbor_report_csv(all_neighbor_sets(embeddings, args.k), out / "neighbors.csv")
    print(f"wrote neighbor report for {len(embeddings)} cities (K={args.k})")
    return EXIT_OK


def cmd_train_global(args) -> int:
    run = load_run_config(args.config)
    seed = args.seed if args.seed is not None else run.seed
    corpus = load_and_validate_corpus(args.tweets, args.cities)
    records = zero_mobility(corpus.tweets) if args.pure_text else corpus.tweets
    d_t, d_m, _ = corpus.dims
    model = train_global(
        records, d_t, d_m, seed,
        stage1_epochs=run.stage1_epochs, stage2_epochs=run.stage2_epochs,
    )
    out = _resolve_out(args)
    io.save_checkpoint(model.groups(), out / "global_model.json")
    print(f"wrote global model to {out / 'global_model.json'}")
    return EXIT_OK


def _load_fusion(path) -> FusionParams:
    groups = io.load_checkpoint(path)
    return FusionParams(
        pooler=groups["theta_t_pooler"],
        mobility=groups["theta_m"],
        fusion=groups["theta_f"],
        classifier=groups["theta_c"],
    )


def cmd_adapt(args) -> int:
    run = load_run_config(args.config)
    if args.seed is not None:
        run.adapt.seed = args.seed
    corpus = load_and_validate_corpus(args.tweets, args.cities)
    embeddings = io.load_embeddings_csv(args.embeddings)
    global_model = _load_fusion(args.checkpoint)
    result = adapt_all(global_model, corpus, embeddings, run.adapt)
    out = _resolve_out(args)
    ckpt_dir = out / "city_checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    for city_id, params in sorted(result.checkpoints.items()):
        io.save_checkpoint(params.groups(), ckpt_dir / f"{city_id}.json")
    with open(out / "augmentation_audit.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["target_city", "source_city", "alpha", "records_used"])
        for t, s, a, n in result.audit_rows:
            w.writerow([t, s, repr(a), n])
    print(
        f"adapted {len(result.checkpoints)} cities; "
        f"skipped {len(result.skipped)}; failed {len(result.failures)}"
    )
    return EXIT_NUMERICAL if result.failures else EXIT_OK


def cmd_evaluate(args) -> int:
    corpus = load_and_validate_corpus(args.tweets, args.cities)
    records = zero_mobility(corpus.tweets) if args.pure_text else corpus.tweets
    records = [r for r in records if r.gold_label is not None]
    if not records:
        print("no gold-labeled records to evaluate", file=sys.stderr)
        return EXIT_DATA
    model = _load_fusion(args.checkpoint)
    city_dir = Path(args.city_checkpoints) if args.city_checkpoints else None
    out = _resolve_out(args)
    preds, rows = [], []
    for r in records:
        m = model
        if city_dir is not None:
            ckpt = city_dir / f"{r.city_id}.json"
            if ckpt.exists():
                m = _load_fusion(ckpt)
        label, probs = predict(m, [r])[0]
        preds.append(label)
        rows.append((r.tweet_id, r.city_id, label, probs[0], probs[1], probs[2]))
    io.save_predictions_csv(rows, out / "predictions.csv")
    from .metrics import ConfusionMatrix, classification_metrics

    cm = ConfusionMatrix.from_labels([r.gold_label for r in records], preds)
    report = classification_metrics(cm).as_dict()
    (out / "metrics.json").write_text(json.dumps({"models": {args.label: report}}, sort_keys=True))
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_acc_sentiment(args) -> int:
    tweets = {t.tweet_id: t for t in io.load_tweets_jsonl(args.tweets)}
    by_city: dict[str, list[tuple[int, int]]] = {}
    with open(args.predictions, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in reader:
            t = tweets.get(row["tweet_id"])
            if t is None:
                print(f"prediction for unknown tweet {row['tweet_id']}", file=sys.stderr)
                return EXIT_DATA
            by_city.setdefault(t.city_id, []).append((t.day, int(row["pred_label"])))
    out = _resolve_out(args)
    with open(out / "acc_sentiment.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["city_id", "day", "acc_sentiment"])
        for city in sorted(by_city):
            n_days = max(d for d, _ in by_city[city]) + 1
            pos = np.zeros(n_days, dtype=np.int64)
            neg = np.zeros(n_days, dtype=np.int64)
            for day, label in by_city[city]:
                if label == 1:
                    pos[day] += 1
                elif label == -1:
                    neg[day] += 1
            series = SentimentSeries(pos=pos, neg=neg)
            for t in range(n_days):
                v = accumulative_sentiment(series, t)
                w.writerow([city, t, "" if v is None else repr(v)])
    print(f"wrote accumulative sentiment for {len(by_city)} cities")
    return EXIT_OK


def cmd_correlate(args) -> int:
    tweets = io.load_tweets_jsonl(args.tweets)
    acc: dict[str, dict[int, float | None]] = {}
    with open(args.acc_sentiment, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in reader:
            v = float(row["acc_sentiment"]) if row["acc_sentiment"] != "" else None
            acc.setdefault(row["city_id"], {})[int(row["day"])] = v
    by_city: dict[str, list] = {}
    for t in tweets:
        by_city.setdefault(t.city_id, []).append(t)
    out = _resolve_out(args)
    with open(out / "correlation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["city_id", "slope", "intercept", "r2", "pearson_r", "n"])
        for city in sorted(acc):
            days = sorted(acc[city])
            sentiment = [acc[city][d] for d in days]
            proxy = mobility_proxy_by_day(by_city.get(city, []), len(days))
            try:
                c = sentiment_mobility_correlation(sentiment, proxy)
            except ValueError:
                continue
            w.writerow([city, repr(c.slope), repr(c.intercept), repr(c.r_squared), repr(c.pearson_r), c.n])
    print(f"wrote correlation report to {out / 'correlation.csv'}")
    return EXIT_OK


def cmd_ablation(args) -> int:
    seeds = range(args.seeds)
    out = _resolve_out(args)
    table = run_ablation(seeds)
    detail = {
        "global_comparison": run_global_comparison(seeds),
        "adaptation_comparison": run_adaptation_comparison(seeds),
        "freeze_comparison": run_freeze_comparison(seeds),
    }
    (out / "ablation.json").write_text(
        json.dumps({"median_macro_f1": table, "per_seed": detail}, sort_keys=True)
    )
    for name, value in table.items():
        print(f"{name}: {value:.4f}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    out_override = os.environ.get(OUTDIR_ENV) or args.out
    if args.from_manifest:
        result = rerun_from_manifest(args.from_manifest, out_override or "out")
    else:
        config = load_run_config(args.config)
        if out_override:
            config.out_dir = out_override
        if args.seed is not None:
            config.seed = args.seed
            config.synth.seed = args.seed
            config.encoder.seed = args.seed
            config.adapt.seed = args.seed
        if args.tweets:
            config.tweets_path = args.tweets
        if args.cities:
            config.cities_path = args.cities
        config.pure_text = config.pure_text or args.pure_text
        config.global_only = config.global_only or args.global_only
        result = run_pipeline(config)
    print(f"pipeline complete: {result.out_dir} (manifest {result.manifest_path.name})")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="citysent", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(fn=fn)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override configured seed")
        sp.add_argument("--config", default=None, help="INI config file")
        return sp

    add("synth", cmd_synth, help="generate a synthetic corpus")

    sp = add("ingest", cmd_ingest, help="load + validate corpus; optionally aggregate OD trips")
    sp.add_argument("--tweets", required=True)
    sp.add_argument("--cities", default=None)
    sp.add_argument("--od", default=None)
    sp.add_argument("--crosswalk", default=None)
    sp.add_argument("--min-trips", type=int, default=5)

    sp = add("vif", cmd_vif, help="iterative VIF screening over a feature CSV")
    sp.add_argument("--features", required=True)
    sp.add_argument("--core", default=None, help="comma-separated core column names")
    sp.add_argument("--threshold", type=float, default=5.0)

    sp = add("train-cities", cmd_train_cities, help="train the contrastive city encoder")
    sp.add_argument("--cities", required=True)
    sp.add_argument("--tweets", default=None)
    sp.add_argument("--restrict", default=None, help="train on this comma-separated city subset only")

    sp = add("index", cmd_index, help="build the Top-K neighbor report")
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--k", type=int, default=5)

    sp = add("train-global", cmd_train_global, help="two-stage global model training")
    sp.add_argument("--tweets", required=True)
    sp.add_argument("--cities", required=True)
    sp.add_argument("--pure-text", action="store_true")

    sp = add("adapt", cmd_adapt, help="per-city adaptation from a global checkpoint")
    sp.add_argument("--tweets", required=True)
    sp.add_argument("--cities", required=True)
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--checkpoint", required=True)

    sp = add("evaluate", cmd_evaluate, help="evaluate a checkpoint on gold labels")
    sp.add_argument("--tweets", required=True)
    sp.add_argument("--cities", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--city-checkpoints", default=None)
    sp.add_argument("--pure-text", action="store_true")
    sp.add_argument("--label", default="Global-Fusion")

    sp = add("acc-sentiment", cmd_acc_sentiment, help="accumulative sentiment series")
    sp.add_argument("--tweets", required=True)
    sp.add_argument("--predictions", required=True)

    sp = add("correlate", cmd_correlate, help="sentiment vs mobility correlation")
    sp.add_argument("--tweets", required=True)
    sp.add_argument("--acc-sentiment", required=True)

    sp = add("ablation", cmd_ablation, help="input and training-strategy comparison table")
    sp.add_argument("--seeds", type=int, default=5)

    sp = add("pipeline", cmd_pipeline, help="full end-to-end run")
    sp.add_argument("--tweets", default=None)
    sp.add_argument("--cities", default=None)
    sp.add_argument("--pure-text", dest="pure_text", action="store_true")
    sp.add_argument("--global-only", dest="global_only", action="store_true")
    sp.add_argument("--from-manifest", default=None)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
