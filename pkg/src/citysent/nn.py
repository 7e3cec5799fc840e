"""Dense-network substrate: affine layers with tanh/relu/identity, exact
backprop, cross-entropy, Adam, and a finite-difference gradient checker.

Everything is float64 and seeded; reproducibility beats speed at this scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .records import LABEL_TO_INDEX

log = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "relu", "identity")

PROB_FLOOR = 1e-12


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Mlp:
    layers: list[Layer]
    frozen: bool = False

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def copy(self) -> "Mlp":
        return Mlp(
            layers=[Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
            frozen=self.frozen,
        )

    def params(self) -> list[np.ndarray]:
        out = []
        for l in self.layers:
            out.extend([l.weight, l.bias])
        return out


def init_mlp(sizes: list[int], activations: list[str], rng: np.random.Generator) -> Mlp:
    """Glorot-uniform init: U(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-a, a, size=(fan_out, fan_in))
        layers.append(Layer(weight=w, bias=np.zeros(fan_out), activation=act))
    return Mlp(layers=layers)


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(z: np.ndarray, y: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return 1.0 - y * y
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def mlp_apply(m: Mlp, x: np.ndarray):
    """Forward pass; accepts a vector or an (n, d) batch.

    Returns (output, cache); the cache carries per-layer inputs and
    pre-activations, enough for exact backprop.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != m.in_dim:
        raise ValueError(f"input dim {h.shape[1]} != expected {m.in_dim}")
    cache = {"single": single, "steps": []}
    for layer in m.layers:
        z = h @ layer.weight.T + layer.bias
        y = _act(z, layer.activation)
        cache["steps"].append((h, z, y))
        h = y
    return (h[0] if single else h), cache


def mlp_backward(m: Mlp, cache, upstream: np.ndarray):
    """Exact gradients of the forward map.

    Returns (grads, input_grad) where grads is a list of (dW, db) per layer.
    Gradients are summed over the batch (matching a sum-of-losses upstream).
    """
    g = np.asarray(upstream, dtype=np.float64)
    if cache["single"]:
        g = g[None, :]
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(m.layers)
    for i in range(len(m.layers) - 1, -1, -1):
        h, z, y = cache["steps"][i]
        layer = m.layers[i]
        gz = g * _act_grad(z, y, layer.activation)
        grads[i] = (gz.T @ h, gz.sum(axis=0))
        g = gz @ layer.weight
    return grads, (g[0] if cache["single"] else g)


def zero_grads_like(m: Mlp) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in m.layers]


def add_grads(acc, grads, scale=1.0):
    return [(aw + scale * gw, ab + scale * gb) for (aw, ab), (gw, gb) in zip(acc, grads)]


# ---------------------------------------------------------------- softmax / cross-entropy

def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probabilities: np.ndarray, label: int, weight: float):
    """Weighted CE for one 3-class prediction.

    Returns (loss, gradient w.r.t. pre-softmax logits). Probabilities below
    1e-12 are clamped (logged) so the loss stays finite.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"probabilities must sum to 1, got {p.sum()}")
    if weight < 0:
        raise ValueError(f"weight must be >= 0, got {weight}")
    idx = LABEL_TO_INDEX[label]
    p_true = p[idx]
    if p_true < PROB_FLOOR:
        log.warning("clamping probability %.3e for CE loss", p_true)
        p_true = PROB_FLOOR
    onehot = np.zeros(3)
    onehot[idx] = 1.0
    loss = -weight * np.log(p_true)
    grad = weight * (p - onehot)
    return loss, grad


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], learning_rate: float = 1e-3, **kw) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kw,
        )


def optimizer_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """One Adam update with bias correction; mutates params in place.

    Rejects non-finite gradients rather than poisoning the parameters.
    """
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient; step rejected")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        m_hat = state.m[i] / (1 - b1**t)
        v_hat = state.v[i] / (1 - b2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------- gradient checking

def grad_check(loss_fn, params: list[np.ndarray], h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn(params) must return (loss, grads) with grads shaped like params.
    """
    _, analytic = loss_fn(params)
    worst = 0.0
    for pi, p in enumerate(params):
        flat = p.ravel()
        g_flat = np.asarray(analytic[pi]).ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lp, _ = loss_fn(params)
            flat[j] = orig - h
            lm, _ = loss_fn(params)
            flat[j] = orig
            g_fd = (lp - lm) / (2 * h)
            g_a = g_flat[j]
            err = abs(g_a - g_fd) / max(1e-8, abs(g_a) + abs(g_fd))
            worst = max(worst, err)
    return worst


def mlp_grads_flat(grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    out = []
    for gw, gb in grads:
        out.extend([gw, gb])
    return out
