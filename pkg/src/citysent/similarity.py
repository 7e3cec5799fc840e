"""Exact cosine retrieval over city embeddings: candidate sets (non-negative
similarity) and deterministic Top-K neighbor sets.

Brute force on purpose: with at most a few thousand cities, a full scan is
exact, dependency-free, and trivially reproducible. The contract would allow
an approximate backend later without touching callers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NeighborSet:
    target: str
    neighbors: list[tuple[str, float]]  # (city_id, similarity), similarity descending


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vector")
    return float(a @ b / (na * nb))


def candidate_set(target: str, embeddings: dict[str, np.ndarray]) -> set[str]:
    """All other cities with similarity >= 0 to the target (the >= is load
    bearing: exactly-orthogonal neighbors stay in)."""
    if target not in embeddings:
        raise KeyError(f"unknown city {target!r}")
    z_i = embeddings[target]
    return {
        j for j, z_j in embeddings.items() if j != target and cosine_sim(z_i, z_j) >= 0.0
    }


def top_k(target: str, embeddings: dict[str, np.ndarray], k: int) -> NeighborSet:
    """K highest-similarity candidates, descending; ties broken by ascending
    city_id so retrieval (and everything downstream) is deterministic."""
    if k < 0:
        raise ValueError("k must be >= 0")
    z_i = embeddings[target]
    scored = [
        (j, cosine_sim(z_i, embeddings[j])) for j in sorted(candidate_set(target, embeddings))
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return NeighborSet(target=target, neighbors=scored[:k])


def all_neighbor_sets(embeddings: dict[str, np.ndarray], k: int) -> list[NeighborSet]:
    return [top_k(city_id, embeddings, k) for city_id in sorted(embeddings)]
