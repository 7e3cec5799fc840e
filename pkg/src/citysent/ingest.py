"""Data preparation: OD-trip filtering, tract-to-city aggregation, iterative
VIF screening, and feature standardization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .records import ODRecord

# Crosswalk: tract_id -> (city_id, tract_population)
Crosswalk = dict[str, tuple[str, int]]

VIF_CAP = 1e12  # reported in place of infinity under perfect collinearity

MOBILITY_FEATURE_NAMES = ("total_outflow", "total_inflow", "intra_city_trips", "log1p_total_flow")


def filter_od(records: list[ODRecord], min_trips: int = 5) -> list[ODRecord]:
    """Drop OD pairs with fewer than min_trips trips; order preserved."""
    if min_trips < 0:
        raise ValueError("min_trips must be >= 0")
    return [r for r in records if r.trips >= min_trips]


def od_to_city_mobility(
    records: list[ODRecord], crosswalk: Crosswalk
) -> dict[tuple[str, int], np.ndarray]:
    """Aggregate tract-level OD trips into per-(city, day) mobility vectors
    [total_outflow, total_inflow, intra_city_trips, log1p(total_flow)]."""
    sums: dict[tuple[str, int], np.ndarray] = {}

    def bucket(city: str, day: int) -> np.ndarray:
        return sums.setdefault((city, day), np.zeros(3))

    for r in records:
        for tract in (r.origin_tract, r.dest_tract):
            if tract not in crosswalk:
                raise KeyError(f"tract {tract!r} missing from crosswalk")
        o_city = crosswalk[r.origin_tract][0]
        d_city = crosswalk[r.dest_tract][0]
        if o_city == d_city:
            bucket(o_city, r.day)[2] += r.trips
        else:
            bucket(o_city, r.day)[0] += r.trips
            bucket(d_city, r.day)[1] += r.trips
    return {
        key: np.concatenate([v, [np.log1p(v.sum())]]) for key, v in sums.items()
    }


def aggregate_tracts_to_city(
    tract_features: dict[str, np.ndarray], crosswalk: Crosswalk
) -> tuple[dict[str, np.ndarray], dict[str, int], list[str]]:
    """Population-weighted mean of tract vectors per city.

    Returns (city vectors, city populations, cities that fell back to an
    unweighted mean because every tract reported zero population).
    """
    groups: dict[str, list[tuple[np.ndarray, int]]] = {}
    for tract, vec in tract_features.items():
        if tract not in crosswalk:
            raise KeyError(f"tract {tract!r} missing from crosswalk")
        city, pop = crosswalk[tract]
        groups.setdefault(city, []).append((np.asarray(vec, dtype=np.float64), pop))

    vectors: dict[str, np.ndarray] = {}
    populations: dict[str, int] = {}
    flagged: list[str] = []
    for city, members in groups.items():
        pops = np.array([p for _, p in members], dtype=np.float64)
        mat = np.stack([v for v, _ in members])
        total = pops.sum()
        if total == 0:
            flagged.append(city)
            vectors[city] = mat.mean(axis=0)
        else:
            vectors[city] = (pops[:, None] * mat).sum(axis=0) / total
        populations[city] = int(total)
    return vectors, populations, flagged


# ---------------------------------------------------------------- standardization

@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    constant_columns: list[int]

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        safe_std = np.where(self.std == 0.0, 1.0, self.std)
        out = (x - self.mean) / safe_std
        if self.constant_columns:
            out[..., self.constant_columns] = 0.0
        return out


def standardize(features: np.ndarray) -> tuple[np.ndarray, Standardizer]:
    """Column-wise z-score (population std). Constant columns map to zeros and
    are flagged on the returned Standardizer, which freezes the statistics for
    later inference-time use."""
    x = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in feature matrix")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = [int(i) for i in np.flatnonzero(std == 0.0)]
    st = Standardizer(mean=mean, std=std, constant_columns=constant)
    return st.transform(x), st


# ---------------------------------------------------------------- VIF screening

def _vif_of_column(x: np.ndarray, j: int, others: list[int]) -> float:
    """1 / (1 - R^2) from an intercept-included least-squares regression of
    column j on the other retained columns."""
    y = x[:, j]
    design = np.column_stack([x[:, others], np.ones(x.shape[0])])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return 1.0  # constant column carries no variance to inflate
    r2 = 1.0 - float((resid**2).sum()) / ss_tot
    if r2 >= 1.0 - 1.0 / VIF_CAP:
        return VIF_CAP
    return min(1.0 / (1.0 - r2), VIF_CAP)


def vif_screen(
    features: np.ndarray,
    core_mask: np.ndarray,
    threshold: float = 5.0,
    column_names: list[str] | None = None,
) -> tuple[list[int], list[tuple[int, str, float, str]]]:
    """Iteratively drop the worst-VIF non-core column until all non-core VIFs
    are at or below the threshold.

    Core columns are never removed. Ties on the max VIF go to the lowest
    column index. Returns (surviving column indices in original order,
    log rows (round, column_name, vif, action)).
    """
    x = np.asarray(features, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in feature matrix")
    n, p = x.shape
    if p < 2:
        raise ValueError("need at least 2 columns")
    core = np.asarray(core_mask, dtype=bool)
    if core.shape != (p,):
        raise ValueError(f"core_mask must have length {p}")
    names = column_names if column_names is not None else [f"col{i}" for i in range(p)]

    x, _ = standardize(x)
    retained = list(range(p))
    log_rows: list[tuple[int, str, float, str]] = []
    round_no = 0
    while True:
        round_no += 1
        if len(retained) < 2:
            raise ValueError("fewer than 2 columns retained; screening aborted")
        vifs = {}
        for j in retained:
            if core[j]:
                continue
            others = [k for k in retained if k != j]
            vifs[j] = _vif_of_column(x, j, others)
        if not vifs:
            break
        worst = max(vifs.values())
        if worst <= threshold:
            for j in sorted(vifs):
                log_rows.append((round_no, names[j], vifs[j], "kept"))
            break
        removed = min(j for j, v in vifs.items() if v == worst)
        for j in sorted(vifs):
            action = "removed" if j == removed else "kept"
            log_rows.append((round_no, names[j], vifs[j], action))
        retained.remove(removed)
    return retained, log_rows


def recompute_vifs(features: np.ndarray, columns: list[int], core_mask: np.ndarray) -> dict[int, float]:
    """Fresh VIF pass over an already-screened column set (verification hook)."""
    x, _ = standardize(np.asarray(features, dtype=np.float64))
    core = np.asarray(core_mask, dtype=bool)
    out = {}
    for j in columns:
        if core[j]:
            continue
        out[j] = _vif_of_column(x, j, [k for k in columns if k != j])
    return out
