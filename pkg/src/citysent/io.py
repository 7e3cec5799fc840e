"""File formats: JSON Lines tweets, CSV cities / OD / crosswalk / annotations,
JSON parameter checkpoints, and the CSV reports emitted by the CLI."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .records import AnnotationTable, CityStatic, Corpus, ODRecord, TweetRecord

CHECKPOINT_FORMAT = "citysent-checkpoint"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------- tweets

def save_tweets_jsonl(tweets: list[TweetRecord], path) -> None:
    with open(path, "w") as fh:
        for t in tweets:
            obj = {
                "tweet_id": t.tweet_id,
                "city_id": t.city_id,
                "day": t.day,
                "text_embedding": t.text_embedding.tolist(),
                "mobility_features": t.mobility_features.tolist(),
                "weak_label": t.weak_label,
                "gold_label": t.gold_label,
                "weight": t.weight,
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def load_tweets_jsonl(path) -> list[TweetRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            obj = json.loads(line)
            out.append(
                TweetRecord(
                    tweet_id=str(obj["tweet_id"]),
                    city_id=str(obj["city_id"]),
                    day=int(obj["day"]),
                    text_embedding=obj["text_embedding"],
                    mobility_features=obj["mobility_features"],
                    weak_label=obj.get("weak_label"),
                    gold_label=obj.get("gold_label"),
                    weight=float(obj.get("weight", 1.0)),
                )
            )
    return out


# ---------------------------------------------------------------- cities

def save_cities_csv(cities: dict[str, CityStatic], path) -> None:
    d = len(next(iter(cities.values())).features) if cities else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["city_id", "risk", "population", "urban"] + [f"f{i}" for i in range(d)])
        for city in sorted(cities.values(), key=lambda c: c.city_id):
            w.writerow(
                [city.city_id, repr(city.risk), city.population, int(city.urban)]
                + [repr(x) for x in city.features.tolist()]
            )


def _comment_free(fh):
    return (line for line in fh if not line.startswith("#"))


def load_cities_csv(path) -> dict[str, CityStatic]:
    out: dict[str, CityStatic] = {}
    with open(path, newline="") as fh:
        r = csv.reader(_comment_free(fh))
        header = next(r)
        n_meta = 4
        if header[:n_meta] != ["city_id", "risk", "population", "urban"]:
            raise ValueError(f"unexpected cities CSV header: {header[:n_meta]}")
        for row in r:
            if not row:
                continue
            city = CityStatic(
                city_id=row[0],
                features=[float(x) for x in row[n_meta:]],
                risk=float(row[1]),
                population=int(row[2]),
                urban=bool(int(row[3])),
            )
            out[city.city_id] = city
    return out


# ---------------------------------------------------------------- OD / crosswalk / annotations

def load_od_csv(path) -> list[ODRecord]:
    out = []
    with open(path, newline="") as fh:
        r = csv.DictReader(_comment_free(fh))
        for row in r:
            out.append(
                ODRecord(
                    origin_tract=row["origin_tract"],
                    dest_tract=row["dest_tract"],
                    day=int(row["day"]),
                    trips=int(row["trips"]),
                )
            )
    return out


def load_crosswalk_csv(path) -> dict[str, tuple[str, int]]:
    """tract_id -> (city_id, tract_population)."""
    out: dict[str, tuple[str, int]] = {}
    with open(path, newline="") as fh:
        r = csv.DictReader(_comment_free(fh))
        for row in r:
            tract = row["tract_id"]
            if tract in out:
                raise ValueError(f"tract {tract!r} mapped twice in crosswalk")
            out[tract] = (row["city_id"], int(row["population"]))
    return out


def load_annotations_csv(path) -> AnnotationTable:
    rows = []
    with open(path, newline="") as fh:
        r = csv.DictReader(_comment_free(fh))
        for row in r:
            rows.append([int(row["annotator_a"]), int(row["annotator_b"])])
    return AnnotationTable(labels=np.asarray(rows, dtype=np.int64))


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(groups: dict, path, config_hash: str | None = None) -> None:
    """Write named parameter groups (name -> Mlp) as versioned JSON.

    Serialization is canonical (sorted keys, repr floats), so identical
    parameters always produce byte-identical files.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "groups": {name: mlp_to_dict(mlp) for name, mlp in groups.items()},
    }
    if config_hash is not None:
        payload["config_hash"] = config_hash
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_checkpoint(path) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a {CHECKPOINT_FORMAT} file: {path}")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    return {name: mlp_from_dict(d) for name, d in payload["groups"].items()}


def mlp_to_dict(mlp) -> dict:
    return {
        "frozen": mlp.frozen,
        "layers": [
            {
                "activation": layer.activation,
                "shape": list(layer.weight.shape),
                "weight": layer.weight.ravel().tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in mlp.layers
        ],
    }


def mlp_from_dict(d):
    from .nn import Layer, Mlp

    layers = []
    for ld in d["layers"]:
        shape = tuple(ld["shape"])
        layers.append(
            Layer(
                weight=np.asarray(ld["weight"], dtype=np.float64).reshape(shape),
                bias=np.asarray(ld["bias"], dtype=np.float64),
                activation=ld["activation"],
            )
        )
    return Mlp(layers=layers, frozen=bool(d["frozen"]))


def mlp_bytes(mlp) -> bytes:
    """Canonical byte serialization of one parameter group (freeze audits).

    The frozen flag is excluded on purpose: freezing toggles it without
    touching a single weight, and the audit compares weights.
    """
    d = mlp_to_dict(mlp)
    d.pop("frozen")
    return json.dumps(d, sort_keys=True).encode()


# ---------------------------------------------------------------- reports

def save_embeddings_csv(embeddings: dict[str, np.ndarray], path) -> None:
    d = len(next(iter(embeddings.values()))) if embeddings else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["city_id"] + [f"z_{i}" for i in range(d)])
        for city_id in sorted(embeddings):
            w.writerow([city_id] + [repr(x) for x in np.asarray(embeddings[city_id]).tolist()])


def load_embeddings_csv(path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, newline="") as fh:
        r = csv.reader(_comment_free(fh))
        next(r)
        for row in r:
            if row:
                out[row[0]] = np.asarray([float(x) for x in row[1:]], dtype=np.float64)
    return out


def save_neighbor_report_csv(neighbor_sets, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["target_city", "rank", "neighbor_city", "similarity"])
        for ns in neighbor_sets:
            for rank, (city_id, sim) in enumerate(ns.neighbors, start=1):
                w.writerow([ns.target, rank, city_id, repr(sim)])


def save_vif_log_csv(log_rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "column_name", "vif", "action"])
        for row in log_rows:
            w.writerow([row[0], row[1], repr(row[2]), row[3]])


def save_predictions_csv(rows, path) -> None:
    """rows: (tweet_id, city_id, pred_label, p_neg, p_neu, p_pos)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tweet_id", "city_id", "pred_label", "p_neg", "p_neu", "p_pos"])
        for tid, cid, label, p0, p1, p2 in rows:
            w.writerow([tid, cid, label, repr(p0), repr(p1), repr(p2)])


def save_corpus(corpus: Corpus, tweets_path, cities_path) -> None:
    save_tweets_jsonl(corpus.tweets, tweets_path)
    save_cities_csv(corpus.cities, cities_path)


def load_corpus(tweets_path, cities_path) -> Corpus:
    return Corpus.build(load_tweets_jsonl(tweets_path), load_cities_csv(cities_path))
