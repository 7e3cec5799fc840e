"""City-specific adaptation: similarity-softmax weights over Top-K neighbors,
augmented weighted datasets, and per-city fine-tuning of fusion + classifier.

The per-city objective is the weighted empirical risk

    (1/Z) [ sum over target-city samples of CE
            + sum over neighbors j, samples of city j of alpha_ij * CE ]

with Z the total effective weight. Target samples carry weight 1; a neighbor
city's samples all carry its alpha. Encoder groups stay frozen so adapted and
global models share h_t and h_m exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fusion import FusionParams, weighted_objective
from .nn import AdamState, optimizer_step
from .records import Corpus, TweetRecord
from .similarity import NeighborSet, top_k


@dataclass
class AdaptConfig:
    k: int = 5
    gamma: float = 5.0
    epochs: int = 50
    learning_rate: float = 1e-3
    seed: int = 0
    gold_only: bool = False  # restrict neighbor records to gold labels

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


@dataclass
class AugmentedDataset:
    target_city: str
    records: list[TweetRecord]  # target first (weight 1), then neighbors by rank
    z: float  # total effective weight


def similarity_weights(neighbors: NeighborSet, gamma: float) -> dict[str, float]:
    """Softmax of gamma * similarity over the neighbor set (max-subtracted)."""
    if not neighbors.neighbors:
        raise ValueError("empty neighbor set")
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    sims = np.array([s for _, s in neighbors.neighbors])
    e = np.exp(gamma * (sims - sims.max()))
    alphas = e / e.sum()
    return {city: float(a) for (city, _), a in zip(neighbors.neighbors, alphas)}


def _usable_label(r: TweetRecord, gold_only: bool):
    if r.gold_label is not None:
        return r.gold_label
    if not gold_only:
        return r.weak_label
    return None


def _adaptation_records(records, gold_only: bool):
    """Records usable for adaptation, rewritten so gold_label always holds the
    training label (gold when present, else weak)."""
    from dataclasses import replace

    out = []
    for r in records:
        label = _usable_label(r, gold_only)
        if label is not None:
            out.append(replace(r, gold_label=label))
    return out


def build_augmented_dataset(
    target: str,
    corpus: Corpus,
    neighbors: NeighborSet,
    alphas: dict[str, float],
    gold_only: bool = False,
) -> AugmentedDataset:
    if target not in corpus.cities:
        raise KeyError(f"target city {target!r} not in corpus")
    by_city: dict[str, list[TweetRecord]] = {}
    for r in corpus.tweets:
        by_city.setdefault(r.city_id, []).append(r)

    records: list[TweetRecord] = []
    for r in _adaptation_records(by_city.get(target, []), gold_only):
        records.append(r.with_weight(1.0))
    for city_id, _sim in neighbors.neighbors:
        alpha = alphas[city_id]
        for r in _adaptation_records(by_city.get(city_id, []), gold_only):
            records.append(r.with_weight(alpha))
    z = float(sum(r.weight for r in records))
    return AugmentedDataset(target_city=target, records=records, z=z)


def eval_adaptation_objective(params: FusionParams, dataset: AugmentedDataset) -> float:
    """The weighted empirical risk as evaluated (no gradients)."""
    loss, _ = weighted_objective(
        params, dataset.records, "gold_label", normalizer=dataset.z
    )
    return loss


def adapt_city(
    global_params: FusionParams, dataset: AugmentedDataset, config: AdaptConfig
) -> tuple[FusionParams, list[float]]:
    """Full-batch Adam on the weighted risk over theta_f, theta_c only."""
    if not dataset.records:
        raise ValueError(f"no usable records for city {dataset.target_city!r}")
    params = global_params.copy()
    params.set_frozen({"theta_t_pooler", "theta_m"})
    trainable = {name: mlp for name, mlp in params.groups().items() if not mlp.frozen}
    opts = {
        name: AdamState.for_params(mlp.params(), learning_rate=config.learning_rate)
        for name, mlp in trainable.items()
    }
    curve = []
    for _epoch in range(config.epochs):
        loss, grads = weighted_objective(
            params, dataset.records, "gold_label", normalizer=dataset.z
        )
        for name, mlp in trainable.items():
            optimizer_step(opts[name], mlp.params(), grads[name])
        curve.append(loss)
    return params, curve


@dataclass
class AdaptAllResult:
    checkpoints: dict[str, FusionParams]
    skipped: dict[str, str]  # city -> reason
    failures: dict[str, str]
    audit_rows: list[tuple[str, str, float, int]]  # target, source, alpha, records_used


def adapt_all(
    global_params: FusionParams,
    corpus: Corpus,
    embeddings: dict[str, np.ndarray],
    config: AdaptConfig,
) -> AdaptAllResult:
    """Drive top_k -> alpha weights -> augmentation -> adapt_city per city."""
    missing = set(corpus.cities) - set(embeddings)
    if missing:
        raise ValueError(f"embeddings missing for cities: {sorted(missing)}")
    labeled_counts: dict[str, int] = {c: 0 for c in corpus.cities}
    for r in corpus.tweets:
        if _usable_label(r, config.gold_only) is not None:
            labeled_counts[r.city_id] += 1

    result = AdaptAllResult(checkpoints={}, skipped={}, failures={}, audit_rows=[])
    for city_id in sorted(corpus.cities):
        if labeled_counts[city_id] == 0:
            result.skipped[city_id] = "no labeled records"
            continue
        neighbors = top_k(city_id, embeddings, config.k)
        # empty candidate set (or K=0): adapt on the city's own data only
        alphas = (
            similarity_weights(neighbors, config.gamma) if neighbors.neighbors else {}
        )
        dataset = build_augmented_dataset(
            city_id, corpus, neighbors, alphas, gold_only=config.gold_only
        )
        for source, _sim in neighbors.neighbors:
            used = sum(1 for r in dataset.records if r.city_id == source)
            result.audit_rows.append((city_id, source, alphas[source], used))
        try:
            adapted, _curve = adapt_city(global_params, dataset, config)
        except Exception as exc:  # collected, not fatal: one city must not sink the batch
            result.failures[city_id] = str(exc)
            continue
        result.checkpoints[city_id] = adapted
    return result
