"""Event-log container, parameter types, and dataset splitting shared by all modules.

Times are in hours throughout; every rate parameter is per hour.  All ids
(users, categories, locations) are 0-based integers, and each location
belongs to exactly one category.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np


class DegenerateDistributionError(ValueError):
    """A location distribution has no probability mass to place."""


class PredictionError(RuntimeError):
    """The conditional next-event distribution does not admit a prediction."""


class NumericalError(RuntimeError):
    """A computation produced a non-finite intermediate value."""


class KernelMode(str, Enum):
    """How an elapsed offset is assigned to a period of the temporal kernel.

    FLOOR assigns offset dt to period index floor(dt/tau); because the kernel
    is truncated at tau/2, only the half-bump trailing each period peak then
    contributes.  NEAREST assigns dt to the closest period peak, so each peak
    keeps its full truncated support.  FLOOR is the default.
    """

    FLOOR = "floor"
    NEAREST = "nearest"


@dataclass(frozen=True)
class Checkin:
    """One check-in: user `user` visited location `location` (of category
    `category`) at time `t`."""

    t: float
    user: int
    category: int
    location: int


@dataclass(frozen=True)
class HyperParams:
    """Fixed hyper-parameters of the model.

    tau: period of the temporal kernel (hours).
    sigma: width of the Gaussian bump around each period peak (hours).
    kernel_mode: period assignment rule, see KernelMode.
    spatial_decay: rate of the exponential decay applied to location weights.
    max_periods: period index beyond which kernel contributions are dropped
        (exp(-k) underflows well before the default of 50).
    popularity_smoothing: pseudo-mass added to every location of a category
        when forming the popularity distribution.  At 0 (the default)
        popularity is exactly proportional to decayed visit mass, which makes
        exploration unable to reach never-visited locations: each category
        then locks onto its first location.  Simulation studies that need a
        live location process should set a small positive value.
    """

    tau: float = 12.0
    sigma: float = 0.5
    kernel_mode: KernelMode = KernelMode.FLOOR
    spatial_decay: float = 1.0
    max_periods: int = 50
    popularity_smoothing: float = 0.0

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.spatial_decay <= 0:
            raise ValueError(f"spatial_decay must be positive, got {self.spatial_decay}")
        if self.max_periods < 1:
            raise ValueError(f"max_periods must be >= 1, got {self.max_periods}")
        if self.popularity_smoothing < 0:
            raise ValueError(
                f"popularity_smoothing must be nonnegative, got {self.popularity_smoothing}"
            )
        object.__setattr__(self, "kernel_mode", KernelMode(self.kernel_mode))


@dataclass(eq=False)
class ModelParams:
    """Model parameters.

    mu: (N, C) nonnegative base intensity per user and category.
    beta: (N,) nonnegative temporal kernel weight per user.
    alpha: (N, N) nonnegative influence matrix; alpha[v, u] is the influence
        of user v's check-ins on user u's location choices.
    eta: (N, C) nonnegative exploration weight per user and category.
    """

    mu: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    eta: np.ndarray

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        n, c = self.mu.shape
        if self.beta.shape != (n,):
            raise ValueError(f"beta shape {self.beta.shape} does not match mu {self.mu.shape}")
        if self.alpha.shape != (n, n):
            raise ValueError(f"alpha shape {self.alpha.shape} does not match {n} users")
        if self.eta.shape != (n, c):
            raise ValueError(f"eta shape {self.eta.shape} does not match mu {self.mu.shape}")
        for name in ("mu", "beta", "alpha", "eta"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            if np.any(arr < 0):
                raise ValueError(f"{name} contains negative entries")

    @property
    def n_users(self) -> int:
        return self.mu.shape[0]

    @property
    def n_categories(self) -> int:
        return self.mu.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.mu.copy(), self.beta.copy(), self.alpha.copy(), self.eta.copy())

    def check_support(self, graph: "SocialGraph") -> None:
        """Raise if alpha has mass outside the edge set of `graph`."""
        mask = graph.adjacency_matrix()
        if np.any(self.alpha[~mask] != 0.0):
            raise ValueError("alpha has nonzero entries outside the support mask")


class SocialGraph:
    """Directed graph over `n` users; an edge (v, u) means v influences u."""

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        self.n = int(n)
        seen: set[tuple[int, int]] = set()
        for v, u in edges:
            v, u = int(v), int(u)
            if not (0 <= v < self.n and 0 <= u < self.n):
                raise ValueError(f"edge ({v}, {u}) outside 0..{self.n - 1}")
            seen.add((v, u))
        self.edges = seen

    @classmethod
    def from_adjacency(cls, adj: np.ndarray) -> "SocialGraph":
        adj = np.asarray(adj)
        vs, us = np.nonzero(adj)
        return cls(adj.shape[0], zip(vs.tolist(), us.tolist()))

    def adjacency_matrix(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        for v, u in self.edges:
            adj[v, u] = True
        return adj

    def in_neighbors(self, u: int) -> list[int]:
        return sorted(v for v, w in self.edges if w == u)

    def out_neighbors(self, v: int) -> list[int]:
        return sorted(u for w, u in self.edges if w == v)

    def __len__(self) -> int:
        return len(self.edges)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, SocialGraph)
            and self.n == other.n
            and self.edges == other.edges
        )


class EventLog:
    """Time-sorted sequence of check-ins over a fixed id universe.

    Events are stably sorted by time (simultaneous events keep their input
    order) and must all lie strictly before `horizon`, the end of the
    observation window.  History queries use strict `t_i < t`.
    """

    def __init__(
        self,
        events: Iterable[Checkin | tuple],
        n_users: int,
        n_categories: int,
        n_locations: int,
        horizon: float,
        location_categories: Sequence[int],
    ):
        rows = [e if isinstance(e, Checkin) else Checkin(*e) for e in events]
        order = sorted(range(len(rows)), key=lambda i: rows[i].t)
        rows = [rows[i] for i in order]

        self.n_users = int(n_users)
        self.n_categories = int(n_categories)
        self.n_locations = int(n_locations)
        self.horizon = float(horizon)
        self.location_categories = np.asarray(location_categories, dtype=np.int64)

        if self.location_categories.shape != (self.n_locations,):
            raise ValueError(
                f"location_categories has shape {self.location_categories.shape}, "
                f"expected ({self.n_locations},)"
            )
        if self.n_locations and (
            self.location_categories.min() < 0
            or self.location_categories.max() >= self.n_categories
        ):
            raise ValueError("location_categories contains out-of-range category ids")

        self.t = np.array([e.t for e in rows], dtype=float)
        self.user = np.array([e.user for e in rows], dtype=np.int64)
        self.category = np.array([e.category for e in rows], dtype=np.int64)
        self.location = np.array([e.location for e in rows], dtype=np.int64)

        if len(rows):
            if self.t.min() < 0:
                raise ValueError("event times must be nonnegative")
            if self.t.max() >= self.horizon:
                raise ValueError(
                    f"event at t={self.t.max()} is not before horizon={self.horizon}"
                )
            for name, arr, hi in (
                ("user", self.user, self.n_users),
                ("category", self.category, self.n_categories),
                ("location", self.location, self.n_locations),
            ):
                if arr.min() < 0 or arr.max() >= hi:
                    raise ValueError(f"{name} id out of range 0..{hi - 1}")
            bad = self.category != self.location_categories[self.location]
            if np.any(bad):
                i = int(np.flatnonzero(bad)[0])
                raise ValueError(
                    f"event {i}: category {self.category[i]} does not match "
                    f"location {self.location[i]}'s category "
                    f"{self.location_categories[self.location[i]]}"
                )
        self._uc_index: dict[tuple[int, int], np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Checkin]:
        return (self.checkin(i) for i in range(len(self)))

    def checkin(self, i: int) -> Checkin:
        return Checkin(
            float(self.t[i]), int(self.user[i]), int(self.category[i]), int(self.location[i])
        )

    def locations_of(self, category: int) -> np.ndarray:
        """Ids of the locations belonging to `category`, ascending."""
        return np.flatnonzero(self.location_categories == category)

    def times_for(self, user: int, category: int) -> np.ndarray:
        """Event times of (user, category), ascending (global sort order)."""
        if self._uc_index is None:
            index: dict[tuple[int, int], list[int]] = {}
            for i in range(len(self)):
                index.setdefault((int(self.user[i]), int(self.category[i])), []).append(i)
            self._uc_index = {k: self.t[np.array(v)] for k, v in index.items()}
        return self._uc_index.get((user, category), np.empty(0))

    def filtration(
        self,
        t: float,
        user: int | None = None,
        category: int | None = None,
        location: int | None = None,
        exclude_user: int | None = None,
    ) -> list[Checkin]:
        """Events strictly before `t` matching every supplied filter.

        Omitted filters are wildcards; `exclude_user` drops that user's
        events.  Time order is preserved.
        """
        for name, val, hi in (
            ("user", user, self.n_users),
            ("category", category, self.n_categories),
            ("location", location, self.n_locations),
            ("exclude_user", exclude_user, self.n_users),
        ):
            if val is not None and not (0 <= val < hi):
                raise ValueError(f"{name}={val} out of range 0..{hi - 1}")
        n_before = int(np.searchsorted(self.t, t, side="left"))
        keep = np.ones(n_before, dtype=bool)
        if user is not None:
            keep &= self.user[:n_before] == user
        if category is not None:
            keep &= self.category[:n_before] == category
        if location is not None:
            keep &= self.location[:n_before] == location
        if exclude_user is not None:
            keep &= self.user[:n_before] != exclude_user
        return [self.checkin(i) for i in np.flatnonzero(keep)]

    def window_slice(self, a: float, b: float) -> np.ndarray:
        """Indices of events with a <= t < b (half-open, like the horizon)."""
        lo = int(np.searchsorted(self.t, a, side="left"))
        hi = int(np.searchsorted(self.t, b, side="left"))
        return np.arange(lo, hi)

    def replace(self, *, events: Iterable | None = None, horizon: float | None = None) -> "EventLog":
        evs = list(self) if events is None else events
        return EventLog(
            evs,
            self.n_users,
            self.n_categories,
            self.n_locations,
            self.horizon if horizon is None else horizon,
            self.location_categories,
        )


def filtration(log: EventLog, t: float, **filters) -> list[Checkin]:
    """Free-function alias for EventLog.filtration."""
    return log.filtration(t, **filters)


def split(log: EventLog, train_fraction: float) -> tuple[EventLog, EventLog]:
    """Split a log chronologically: first floor(K * fraction) events train.

    The train log's horizon is the time of the first test event, so train
    likelihoods integrate exactly over the observed prefix.  The test log
    keeps the full horizon and the global id universe.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    k = len(log)
    if k < 2:
        raise ValueError(f"need at least 2 events to split, got {k}")
    n_train = int(np.floor(k * train_fraction))
    boundary = float(log.t[n_train])
    if n_train > 0 and log.t[n_train - 1] == boundary:
        raise ValueError(
            f"cannot split: events {n_train - 1} and {n_train} share time {boundary}"
        )
    train = EventLog(
        [log.checkin(i) for i in range(n_train)],
        log.n_users, log.n_categories, log.n_locations,
        boundary, log.location_categories,
    )
    test = EventLog(
        [log.checkin(i) for i in range(n_train, k)],
        log.n_users, log.n_categories, log.n_locations,
        log.horizon, log.location_categories,
    )
    return train, test
