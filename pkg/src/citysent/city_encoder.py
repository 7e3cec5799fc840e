"""City-wide learning layer: encoder from static city features to embeddings,
risk-difference pools, the risk-aware triplet contrastive loss, and training.

The loss asks that cities with near-identical wildfire risk sit closer to the
anchor than moderately different ones, which in turn sit closer than very
different ones:

    loss = -log sigmoid( lam * [sim(zA,zP) - sim(zA,zS)]
                         + (1 - lam) * [sim(zA,zS) - sim(zA,zN)] )

with cosine similarity throughout. Because cosine is scale invariant, the
optional L2 normalization of exported embeddings never changes the loss, so
training backprops through the raw encoder output only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import (
    AdamState,
    Mlp,
    add_grads,
    init_mlp,
    mlp_apply,
    mlp_backward,
    mlp_grads_flat,
    optimizer_step,
    zero_grads_like,
)
from .records import CityStatic


@dataclass
class CityEncoderConfig:
    embed_dim: int = 16
    hidden_sizes: tuple[int, ...] = (64,)
    lam: float = 0.5
    tau1: float | None = None  # None -> 33rd percentile of observed |risk diff|
    tau2: float | None = None  # None -> 66th percentile
    epochs: int = 200
    anchors_per_step: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    normalize_embeddings: bool = True

    def __post_init__(self):
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")
        if self.tau1 is not None and self.tau2 is not None:
            if not (0.0 <= self.tau1 < self.tau2):
                raise ValueError("need 0 <= tau1 < tau2")


def resolve_taus(config: CityEncoderConfig, cities: list[CityStatic]) -> tuple[float, float]:
    if config.tau1 is not None and config.tau2 is not None:
        return config.tau1, config.tau2
    risks = np.array([c.risk for c in cities])
    diffs = np.abs(risks[:, None] - risks[None, :])
    diffs = diffs[np.triu_indices(len(risks), k=1)]
    t1 = float(np.quantile(diffs, 0.33)) if config.tau1 is None else config.tau1
    t2 = float(np.quantile(diffs, 0.66)) if config.tau2 is None else config.tau2
    if t2 <= t1:  # degenerate risk distributions collapse the percentiles
        t2 = t1 + max(1e-6, 1e-6 * max(1.0, t1))
    return t1, t2


def build_encoder(input_dim: int, config: CityEncoderConfig, rng: np.random.Generator) -> Mlp:
    sizes = [input_dim, *config.hidden_sizes, config.embed_dim]
    acts = ["tanh"] * len(config.hidden_sizes) + ["identity"]
    return init_mlp(sizes, acts, rng)


def encode_city(encoder: Mlp, features: np.ndarray, normalize: bool = True) -> np.ndarray:
    z, _ = mlp_apply(encoder, np.asarray(features, dtype=np.float64))
    if normalize:
        norm = np.linalg.norm(z)
        if norm == 0.0:
            raise ValueError("zero-norm embedding: direction undefined under normalization")
        z = z / norm
    return z


# ---------------------------------------------------------------- pools & sampling

def build_pools(
    anchor: str, cities: list[CityStatic], tau1: float, tau2: float
) -> tuple[set[str], set[str], set[str]]:
    """Partition non-anchor cities by |risk(c) - risk(anchor)| into
    (P: <= tau1, S: in (tau1, tau2], N: > tau2)."""
    by_id = {c.city_id: c for c in cities}
    if anchor not in by_id:
        raise ValueError(f"anchor {anchor!r} not among cities")
    r_a = by_id[anchor].risk
    pools: tuple[set, set, set] = (set(), set(), set())
    for c in cities:
        if c.city_id == anchor:
            continue
        delta = abs(c.risk - r_a)
        if delta <= tau1:
            pools[0].add(c.city_id)
        elif delta <= tau2:
            pools[1].add(c.city_id)
        else:
            pools[2].add(c.city_id)
    return pools


def sample_triplet(
    anchor: str,
    pools: tuple[set[str], set[str], set[str]],
    all_city_ids: list[str],
    rng: np.random.Generator,
) -> tuple[str, str, str]:
    """Draw one city per pool; an empty pool falls back to a uniform draw over
    all non-anchor cities (keeps training going on degenerate pool layouts)."""
    others = sorted(c for c in all_city_ids if c != anchor)
    if len(others) < 3:
        raise ValueError(f"need at least 3 non-anchor cities, have {len(others)}")
    picks = []
    for pool in pools:
        choices = sorted(pool) if pool else others
        picks.append(choices[rng.integers(len(choices))])
    return tuple(picks)


# ---------------------------------------------------------------- triplet loss

def _cosine_with_grads(a: np.ndarray, b: np.ndarray):
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero-norm embedding")
    s = float(a @ b / (na * nb))
    da = b / (na * nb) - s * a / (na * na)
    db = a / (na * nb) - s * b / (nb * nb)
    return s, da, db


def triplet_loss(z_a, z_p, z_s, z_n, lam: float):
    """Risk-aware triplet loss and exact gradients w.r.t. all four embeddings."""
    z_a, z_p, z_s, z_n = (np.asarray(z, dtype=np.float64) for z in (z_a, z_p, z_s, z_n))
    s_ap, d_ap_a, d_ap_p = _cosine_with_grads(z_a, z_p)
    s_as, d_as_a, d_as_s = _cosine_with_grads(z_a, z_s)
    s_an, d_an_a, d_an_n = _cosine_with_grads(z_a, z_n)
    u = lam * (s_ap - s_as) + (1.0 - lam) * (s_as - s_an)
    # softplus(-u), computed stably
    if u > 0:
        loss = math.log1p(math.exp(-u))
    else:
        loss = -u + math.log1p(math.exp(u))
    dl_du = -1.0 / (1.0 + math.exp(u))  # = sigmoid(u) - 1
    c_ap = lam
    c_as = 1.0 - 2.0 * lam
    c_an = -(1.0 - lam)
    g_a = dl_du * (c_ap * d_ap_a + c_as * d_as_a + c_an * d_an_a)
    g_p = dl_du * c_ap * d_ap_p
    g_s = dl_du * c_as * d_as_s
    g_n = dl_du * c_an * d_an_n
    return loss, (g_a, g_p, g_s, g_n)


# ---------------------------------------------------------------- training

def train_city_encoder(cities: list[CityStatic], config: CityEncoderConfig):
    """Contrastive training over uniformly sampled anchors.

    Returns (encoder, {city_id: embedding}, per-epoch mean loss). Deterministic
    for a fixed seed. Features are expected standardized by the caller.
    """
    if len(cities) < 4:
        raise ValueError(f"need at least 4 cities, have {len(cities)}")
    cities = sorted(cities, key=lambda c: c.city_id)
    rng = np.random.default_rng(config.seed)
    input_dim = len(cities[0].features)
    encoder = build_encoder(input_dim, config, rng)
    tau1, tau2 = resolve_taus(config, cities)

    by_id = {c.city_id: c for c in cities}
    ids = [c.city_id for c in cities]
    pools_by_anchor = {cid: build_pools(cid, cities, tau1, tau2) for cid in ids}

    opt = AdamState.for_params(encoder.params(), learning_rate=config.learning_rate)
    steps_per_epoch = max(1, math.ceil(len(ids) / config.anchors_per_step))
    curve: list[float] = []

    for _epoch in range(config.epochs):
        epoch_losses = []
        for _step in range(steps_per_epoch):
            acc = zero_grads_like(encoder)
            step_loss = 0.0
            for _ in range(config.anchors_per_step):
                anchor = ids[rng.integers(len(ids))]
                trip = sample_triplet(anchor, pools_by_anchor[anchor], ids, rng)
                quad = (anchor, *trip)
                outs, caches = [], []
                for cid in quad:
                    z, cache = mlp_apply(encoder, by_id[cid].features)
                    outs.append(z)
                    caches.append(cache)
                loss, grads = triplet_loss(*outs, config.lam)
                step_loss += loss
                for g_z, cache in zip(grads, caches):
                    layer_grads, _ = mlp_backward(encoder, cache, g_z)
                    acc = add_grads(acc, layer_grads, scale=1.0 / config.anchors_per_step)
            optimizer_step(opt, encoder.params(), mlp_grads_flat(acc))
            epoch_losses.append(step_loss / config.anchors_per_step)
        curve.append(float(np.mean(epoch_losses)))

    embeddings = {
        cid: encode_city(encoder, by_id[cid].features, normalize=config.normalize_embeddings)
        for cid in ids
    }
    return encoder, embeddings, curve


def encoder_grad_check(rng: np.random.Generator, config: CityEncoderConfig | None = None) -> float:
    """Finite-difference check of the full encoder-through-triplet-loss path.

    One random anchor/positive/semi/negative quadruple; returns the max
    relative error over all encoder parameters.
    """
    from .nn import grad_check

    config = config or CityEncoderConfig(embed_dim=4, hidden_sizes=(5,))
    input_dim = 6
    encoder = build_encoder(input_dim, config, rng)
    feats = [rng.normal(size=input_dim) for _ in range(4)]

    def loss_fn(_params):
        outs, caches = [], []
        for f in feats:
            z, cache = mlp_apply(encoder, f)
            outs.append(z)
            caches.append(cache)
        loss, grads = triplet_loss(*outs, config.lam)
        acc = zero_grads_like(encoder)
        for g_z, cache in zip(grads, caches):
            layer_grads, _ = mlp_backward(encoder, cache, g_z)
            acc = add_grads(acc, layer_grads, scale=1.0)
        return loss, mlp_grads_flat(acc)

    return grad_check(loss_fn, encoder.params())
