"""Exponentially decayed location weights and the exploit/explore location choice.

Every past check-in at a location leaves a mass that decays exponentially
with age.  A user's weight for a location scales each event's mass by the
influence of the event's author on her; the overall popularity of a location
is the unscaled mass.  Location choice mixes exploiting weighted locations
with exploring according to popularity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DegenerateDistributionError,
    EventLog,
    HyperParams,
    ModelParams,
)


class WeightCache:
    """Per-source decayed location masses, updated incrementally.

    `source_mass[v, l]` is the sum of exp(-decay * age) over v's past events
    at location l.  `advance` applies the exact exponential decay for the
    elapsed time; `add_event` registers a new check-in with unit mass.
    """

    def __init__(self, n_users: int, location_categories: np.ndarray, decay: float, t: float = 0.0):
        self.location_categories = np.asarray(location_categories, dtype=np.int64)
        self.n_users = int(n_users)
        self.decay = float(decay)
        self.t = float(t)
        self.source_mass = np.zeros((self.n_users, len(self.location_categories)))

    @classmethod
    def from_log(
        cls, log: EventLog, hyper: HyperParams, t: float
    ) -> "WeightCache":
        """Cache positioned at time t, loaded with the log's events before t."""
        cache = cls(log.n_users, log.location_categories, hyper.spatial_decay, t)
        sel = log.t < t
        if np.any(sel):
            contrib = np.exp(-hyper.spatial_decay * (t - log.t[sel]))
            np.add.at(cache.source_mass, (log.user[sel], log.location[sel]), contrib)
        return cache

    def advance(self, t_new: float) -> None:
        if t_new < self.t:
            raise ValueError(f"cannot advance backwards: {t_new} < {self.t}")
        if t_new > self.t:
            self.source_mass *= np.exp(-self.decay * (t_new - self.t))
            self.t = t_new

    def add_event(self, user: int, location: int) -> None:
        self.source_mass[user, location] += 1.0

    def copy(self) -> "WeightCache":
        dup = WeightCache(self.n_users, self.location_categories, self.decay, self.t)
        dup.source_mass = self.source_mass.copy()
        return dup


@dataclass(frozen=True)
class LocationDistribution:
    """Probabilities over all locations for one (user, category, time).

    Mass outside the category's locations is zero.  `explore_mass` is the
    probability of drawing from the popularity distribution instead of an
    influenced location.
    """

    probs: np.ndarray
    explore_mass: float


class SpatialWeights:
    """Snapshot of the decayed weights at one evaluation time.

    The per-influencer weight factorizes as alpha[v, u] * source_mass[v, l],
    so the snapshot stores the source masses and the influence matrix and
    derives everything else.
    """

    def __init__(
        self,
        source_mass: np.ndarray,
        alpha: np.ndarray,
        location_categories: np.ndarray,
        eval_time: float,
        popularity_smoothing: float = 0.0,
    ):
        self.source_mass = np.asarray(source_mass, dtype=float)
        self.alpha = np.asarray(alpha, dtype=float)
        self.location_categories = np.asarray(location_categories, dtype=np.int64)
        self.eval_time = float(eval_time)
        self.popularity_smoothing = float(popularity_smoothing)

    @property
    def w(self) -> np.ndarray:
        """(N, L) matrix of user-location weights: w[u, l] = sum_v alpha[v, u] * mass[v, l]."""
        return self.alpha.T @ self.source_mass

    @property
    def m(self) -> np.ndarray:
        """(L,) vector of location popularity masses."""
        return self.source_mass.sum(axis=0)

    def w_by_source(self, v: int, u: int, l: int) -> float:
        """Weight that influencer v contributes to u's weight for location l."""
        return float(self.alpha[v, u] * self.source_mass[v, l])

    def w_total(self, u: int, c: int) -> float:
        """Sum of u's weights over the locations of category c."""
        locs = np.flatnonzero(self.location_categories == c)
        return float(self.alpha[:, u] @ self.source_mass[:, locs].sum(axis=1))

    def m_total(self, c: int) -> float:
        locs = np.flatnonzero(self.location_categories == c)
        return float(self.source_mass[:, locs].sum())


def compute_weights(
    log: EventLog, params: ModelParams, hyper: HyperParams, t: float
) -> SpatialWeights:
    """Decayed weights from the events of `log` strictly before time t."""
    cache = WeightCache.from_log(log, hyper, t)
    return SpatialWeights(
        cache.source_mass, params.alpha, log.location_categories, t,
        popularity_smoothing=hyper.popularity_smoothing,
    )


def popularity_weights(m_locs: np.ndarray, smoothing: float) -> np.ndarray:
    """Normalized popularity over a category's locations.

    Decayed visit masses plus the smoothing pseudo-mass; uniform when both
    are zero (nothing visited yet and no smoothing).
    """
    total = float(m_locs.sum()) + smoothing * len(m_locs)
    if total > 0.0:
        return (m_locs + smoothing) / total
    return np.full(len(m_locs), 1.0 / len(m_locs))


def category_probs(
    source_mass: np.ndarray,
    alpha_col: np.ndarray,
    eta_uc: float,
    cat_locs: np.ndarray,
    smoothing: float = 0.0,
) -> tuple[np.ndarray, float]:
    """Probabilities over a category's locations plus the exploration mass.

    Shared by the snapshot API and the simulator's incremental cache.
    """
    block = source_mass[:, cat_locs]
    w_locs = alpha_col @ block
    w_tot = float(w_locs.sum())
    if eta_uc == 0.0 and w_tot == 0.0:
        raise DegenerateDistributionError(
            "location distribution undefined: zero exploration weight and no "
            "influenced locations"
        )
    popularity = popularity_weights(block.sum(axis=0), smoothing)
    denom = eta_uc + w_tot
    probs = (w_locs + eta_uc * popularity) / denom
    return probs, eta_uc / denom


def location_distribution(
    weights: SpatialWeights, params: ModelParams, u: int, c: int
) -> LocationDistribution:
    """Probability of each location for user u in category c at the snapshot time."""
    cat_locs = np.flatnonzero(weights.location_categories == c)
    if cat_locs.size == 0:
        raise ValueError(f"category {c} has no locations")
    probs_cat, explore = category_probs(
        weights.source_mass, params.alpha[:, u], float(params.eta[u, c]), cat_locs,
        smoothing=weights.popularity_smoothing,
    )
    probs = np.zeros(len(weights.location_categories))
    probs[cat_locs] = probs_cat
    return LocationDistribution(probs, explore)


def influence_share(
    weights: SpatialWeights,
    params: ModelParams,
    u: int,
    c: int,
    l: int,
    v: int | None = None,
) -> float:
    """Share of the location probability attributed to influencer v.

    `v=None` addresses the exploration channel.  Summing over all users and
    the exploration channel recovers the location's total probability.
    """
    if weights.location_categories[l] != c:
        raise ValueError(f"location {l} is not in category {c}")
    cat_locs = np.flatnonzero(weights.location_categories == c)
    block = weights.source_mass[:, cat_locs]
    alpha_col = params.alpha[:, u]
    eta_uc = float(params.eta[u, c])
    w_tot = float(alpha_col @ block.sum(axis=1))
    if eta_uc == 0.0 and w_tot == 0.0:
        raise DegenerateDistributionError(
            "influence shares undefined: zero exploration weight and no "
            "influenced locations"
        )
    denom = eta_uc + w_tot
    if v is not None:
        return float(alpha_col[v] * weights.source_mass[v, l]) / denom
    popularity = popularity_weights(block.sum(axis=0), weights.popularity_smoothing)
    g_l = float(popularity[np.flatnonzero(cat_locs == l)[0]])
    return eta_uc * g_l / denom
