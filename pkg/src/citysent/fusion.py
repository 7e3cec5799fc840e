"""Individual-level learning layer: text pooler, mobility encoder, fusion
network, and sentiment classifier, with the two-stage training protocol.

Parameter partition (group names used in checkpoints and freeze sets):
  theta_t_pooler  affine + tanh over the precomputed text embedding -> h_t
  theta_m         mobility encoder -> h_m
  theta_f         fusion network over [h_t; h_m] -> h_f
  theta_c         classifier -> 3-class logits

Stage 1 trains against weak labels with the external text encoder untouched
by construction (text arrives as fixed vectors); stage 2 refines on gold
labels with both encoder groups frozen, updating only fusion + classifier.
The pooler is treated as part of the trainable fusion path: freezing it at
its random initialization would discard the text signal entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import (
    AdamState,
    Mlp,
    init_mlp,
    mlp_apply,
    mlp_backward,
    mlp_grads_flat,
    optimizer_step,
    softmax,
)
from .records import INDEX_TO_LABEL, LABEL_TO_INDEX, TweetRecord

GROUP_NAMES = ("theta_t_pooler", "theta_m", "theta_f", "theta_c")

# argmax ties resolve toward neutral, then negative
_TIE_PREFERENCE = (1, 0, 2)


@dataclass
class FusionParams:
    pooler: Mlp
    mobility: Mlp
    fusion: Mlp
    classifier: Mlp

    def groups(self) -> dict[str, Mlp]:
        return {
            "theta_t_pooler": self.pooler,
            "theta_m": self.mobility,
            "theta_f": self.fusion,
            "theta_c": self.classifier,
        }

    def copy(self) -> "FusionParams":
        return FusionParams(
            pooler=self.pooler.copy(),
            mobility=self.mobility.copy(),
            fusion=self.fusion.copy(),
            classifier=self.classifier.copy(),
        )

    def set_frozen(self, freeze: set[str]) -> None:
        unknown = freeze - set(GROUP_NAMES)
        if unknown:
            raise ValueError(f"unknown parameter groups: {sorted(unknown)}")
        for name, mlp in self.groups().items():
            mlp.frozen = name in freeze


@dataclass
class StageConfig:
    stage: str  # "weak_pretrain" | "gold_refine"
    label_source: str  # "weak_label" | "gold_label"
    freeze: set[str] = field(default_factory=set)
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.label_source not in ("weak_label", "gold_label"):
            raise ValueError(f"bad label_source {self.label_source!r}")


def stage1_config(**overrides) -> StageConfig:
    return StageConfig(stage="weak_pretrain", label_source="weak_label", freeze=set(), **overrides)


def stage2_config(**overrides) -> StageConfig:
    return StageConfig(
        stage="gold_refine",
        label_source="gold_label",
        freeze={"theta_t_pooler", "theta_m"},
        **overrides,
    )


def init_fusion_params(
    d_t: int,
    d_m: int,
    rng: np.random.Generator,
    h_t: int = 64,
    h_m: int = 64,
    h_f: int = 64,
) -> FusionParams:
    return FusionParams(
        pooler=init_mlp([d_t, h_t], ["tanh"], rng),
        mobility=init_mlp([d_m, h_m], ["tanh"], rng),
        fusion=init_mlp([h_t + h_m, h_f], ["relu"], rng),
        classifier=init_mlp([h_f, 3], ["identity"], rng),
    )


# ---------------------------------------------------------------- forward / backward

def forward_batch(params: FusionParams, x_t: np.ndarray, x_m: np.ndarray):
    """Batch forward; returns (h_t, h_m, h_f, probs, caches)."""
    h_t, cache_p = mlp_apply(params.pooler, x_t)
    h_m, cache_m = mlp_apply(params.mobility, x_m)
    h_f, cache_f = mlp_apply(params.fusion, np.concatenate([h_t, h_m], axis=-1))
    logits, cache_c = mlp_apply(params.classifier, h_f)
    probs = softmax(logits)
    caches = {"pooler": cache_p, "mobility": cache_m, "fusion": cache_f, "classifier": cache_c}
    return h_t, h_m, h_f, probs, caches


def fusion_forward(params: FusionParams, record: TweetRecord):
    """Single-record forward pass mirroring forward_batch."""
    return forward_batch(params, record.text_embedding, record.mobility_features)


def backward_batch(params: FusionParams, caches, grad_logits: np.ndarray) -> dict[str, list]:
    """Backprop from d(loss)/d(logits); returns flat grads per group."""
    grads_c, g_hf = mlp_backward(params.classifier, caches["classifier"], grad_logits)
    grads_f, g_cat = mlp_backward(params.fusion, caches["fusion"], g_hf)
    h_t_dim = params.pooler.out_dim
    g_ht = g_cat[..., :h_t_dim]
    g_hm = g_cat[..., h_t_dim:]
    grads_p, _ = mlp_backward(params.pooler, caches["pooler"], g_ht)
    grads_m, _ = mlp_backward(params.mobility, caches["mobility"], g_hm)
    return {
        "theta_t_pooler": mlp_grads_flat(grads_p),
        "theta_m": mlp_grads_flat(grads_m),
        "theta_f": mlp_grads_flat(grads_f),
        "theta_c": mlp_grads_flat(grads_c),
    }


def _labels_and_weights(records: list[TweetRecord], label_source: str):
    idx = np.empty(len(records), dtype=np.int64)
    w = np.empty(len(records))
    for i, r in enumerate(records):
        label = getattr(r, label_source)
        if label is None:
            raise ValueError(f"record {r.tweet_id!r} has no {label_source}")
        idx[i] = LABEL_TO_INDEX[label]
        w[i] = r.weight
    return idx, w


def weighted_objective(
    params: FusionParams,
    records: list[TweetRecord],
    label_source: str,
    normalizer: float | None = None,
):
    """(1/normalizer) * sum_i w_i * CE_i and its gradients per unfrozen group.

    normalizer defaults to len(records), giving the mean weighted CE used in
    stage training; adaptation passes the total effective weight Z instead.
    """
    if not records:
        raise ValueError("empty record batch")
    z = float(len(records)) if normalizer is None else float(normalizer)
    if z <= 0:
        raise ValueError("normalizer must be > 0")
    x_t = np.stack([r.text_embedding for r in records])
    x_m = np.stack([r.mobility_features for r in records])
    labels, weights = _labels_and_weights(records, label_source)
    _, _, _, probs, caches = forward_batch(params, x_t, x_m)

    n = len(records)
    p_true = np.clip(probs[np.arange(n), labels], 1e-12, None)
    loss = float(-(weights * np.log(p_true)).sum() / z)

    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    grad_logits = (weights[:, None] * (probs - onehot)) / z
    all_grads = backward_batch(params, caches, grad_logits)
    grads = {name: g for name, g in all_grads.items() if not params.groups()[name].frozen}
    return loss, grads


def fusion_loss_batch(params: FusionParams, records: list[TweetRecord], label_source: str):
    """Mean weighted cross-entropy over the batch plus per-group gradients."""
    return weighted_objective(params, records, label_source, normalizer=len(records))


# ---------------------------------------------------------------- training

def train_fusion(
    params: FusionParams,
    records: list[TweetRecord],
    config: StageConfig,
) -> tuple[FusionParams, list[float]]:
    """Minibatch Adam on the mean weighted CE; frozen groups never move.

    Returns (trained copy of params, per-epoch mean loss).
    """
    if not records:
        raise ValueError("empty training set")
    params = params.copy()
    params.set_frozen(set(config.freeze))
    trainable = {name: mlp for name, mlp in params.groups().items() if not mlp.frozen}
    opts = {
        name: AdamState.for_params(mlp.params(), learning_rate=config.learning_rate)
        for name, mlp in trainable.items()
    }
    rng = np.random.default_rng(config.seed)
    order = np.arange(len(records))
    curve: list[float] = []
    for _epoch in range(config.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(records), config.batch_size):
            batch = [records[i] for i in order[start : start + config.batch_size]]
            loss, grads = weighted_objective(params, batch, config.label_source)
            for name, mlp in trainable.items():
                optimizer_step(opts[name], mlp.params(), grads[name])
            epoch_loss += loss
            n_batches += 1
        curve.append(epoch_loss / n_batches)
    return params, curve


def train_stage1(
    params: FusionParams, records: list[TweetRecord], config: StageConfig | None = None
) -> tuple[FusionParams, list[float]]:
    """Weak-label pretraining: pooler, mobility encoder, fusion, classifier."""
    return train_fusion(params, records, config or stage1_config())


def train_stage2(
    params: FusionParams, records: list[TweetRecord], config: StageConfig | None = None
) -> tuple[FusionParams, list[float]]:
    """Gold-label refinement: encoders frozen, fusion + classifier only."""
    return train_fusion(params, records, config or stage2_config())


# ---------------------------------------------------------------- prediction

def predict(params: FusionParams, records: list[TweetRecord]):
    """Per-record (label, probability vector); argmax ties go neutral-first."""
    out = []
    for r in records:
        _, _, _, probs, _ = fusion_forward(params, r)
        best = probs.max()
        idx = next(i for i in _TIE_PREFERENCE if probs[i] == best)
        out.append((INDEX_TO_LABEL[idx], probs))
    return out


def fusion_grad_check(rng: np.random.Generator, n: int = 6) -> dict[str, float]:
    """Finite-difference check of every parameter group on a random batch.

    Returns max relative error per group; all four groups are checked with
    nothing frozen so every gradient path is exercised.
    """
    from .nn import grad_check

    d_t, d_m = 5, 3
    params = init_fusion_params(d_t, d_m, rng, h_t=4, h_m=4, h_f=4)
    params.set_frozen(set())
    records = [
        TweetRecord(
            tweet_id=f"t{i}",
            city_id="c0",
            day=0,
            text_embedding=rng.normal(size=d_t),
            mobility_features=rng.normal(size=d_m),
            weak_label=None,
            gold_label=int(rng.integers(3)) - 1,
            weight=float(rng.uniform(0.3, 1.5)),
        )
        for i in range(n)
    ]
    errors = {}
    for name, mlp in params.groups().items():
        def loss_fn(_params, _name=name):
            loss, grads = weighted_objective(params, records, "gold_label")
            return loss, grads[_name]

        errors[name] = grad_check(loss_fn, mlp.params())
    return errors


def zero_mobility(records: list[TweetRecord]) -> list[TweetRecord]:
    """Pure-text ablation input: mobility replaced by zeros, never read."""
    from dataclasses import replace

    return [
        replace(r, mobility_features=np.zeros(len(r.mobility_features))) for r in records
    ]
