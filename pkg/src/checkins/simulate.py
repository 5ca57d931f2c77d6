"""Sampling check-in streams by thinning.

The next event time is drawn from the process superposed over all users and
categories under a piecewise-constant dominating rate, then the user is
picked proportionally to her intensity, the category proportionally within
the user, and the location from the exploit/explore distribution.

The dominating rate over a lookahead window bounds every event's kernel
train by its next-period peak: bump k of an event never exceeds exp(-k), and
period indices only grow with time, so the bound stays valid until it is
refreshed.  Events accepted inside the window cannot contribute before the
window ends (their first bump is at least half a period away).
"""
from __future__ import annotations

import numpy as np

from .core import (
    Checkin,
    EventLog,
    HyperParams,
    KernelMode,
    ModelParams,
    NumericalError,
)
from .spatial import WeightCache, category_probs
from .temporal import IntensityContext


def _pick(rng: np.random.Generator, weights: np.ndarray) -> int:
    cum = np.cumsum(weights)
    x = rng.uniform(0.0, cum[-1])
    return min(int(np.searchsorted(cum, x, side="right")), len(weights) - 1)


class Simulator:
    """Incremental sampler; owns the event history and decayed location masses."""

    def __init__(
        self,
        params: ModelParams,
        hyper: HyperParams,
        location_categories: np.ndarray,
        rng: np.random.Generator,
        history: EventLog | None = None,
        start_time: float = 0.0,
    ):
        self.params = params
        self.hyper = hyper
        self.loc_cat = np.asarray(location_categories, dtype=np.int64)
        self.rng = rng
        self.n_users = params.n_users
        self.n_categories = params.n_categories
        self.cat_locs = [
            np.flatnonzero(self.loc_cat == c) for c in range(self.n_categories)
        ]
        if any(len(locs) == 0 for locs in self.cat_locs):
            raise ValueError("every category needs at least one location")

        cap = 1024
        self._t = np.empty(cap)
        self._u = np.empty(cap, dtype=np.int64)
        self._c = np.empty(cap, dtype=np.int64)
        self._n = 0
        self._old = 0  # events before this index can never excite again
        self.events: list[Checkin] = []

        self.t_now = float(start_time)
        self.cache = WeightCache(
            self.n_users, self.loc_cat, hyper.spatial_decay, self.t_now
        )
        if history is not None:
            for i in range(len(history)):
                if history.t[i] >= self.t_now:
                    raise ValueError("history events must precede start_time")
                self._append(float(history.t[i]), int(history.user[i]), int(history.category[i]))
                self.cache.source_mass[history.user[i], history.location[i]] += np.exp(
                    -hyper.spatial_decay * (self.t_now - history.t[i])
                )

        self._total_mu = float(np.sum(params.mu))
        self._lookahead = hyper.tau / 2.0

    def _append(self, t: float, u: int, c: int) -> None:
        if self._n == len(self._t):
            grow = len(self._t) * 2
            self._t = np.resize(self._t, grow)
            self._u = np.resize(self._u, grow)
            self._c = np.resize(self._c, grow)
        self._t[self._n] = t
        self._u[self._n] = u
        self._c[self._n] = c
        self._n += 1

    def _active(self, t: float) -> slice:
        cutoff = t - (self.hyper.max_periods + 0.5) * self.hyper.tau
        while self._old < self._n and self._t[self._old] < cutoff:
            self._old += 1
        return slice(self._old, self._n)

    def _kernel_terms(self, t: float) -> tuple[np.ndarray, np.ndarray, slice]:
        sl = self._active(t)
        dt = t - self._t[sl]
        tau = self.hyper.tau
        if self.hyper.kernel_mode is KernelMode.FLOOR:
            k = np.floor(dt / tau)
        else:
            k = np.floor(dt / tau + 0.5)
        return dt, k, sl

    def intensity_matrix(self, t: float) -> np.ndarray:
        """(N, C) matrix of per-user per-category intensities at time t."""
        dt, k, sl = self._kernel_terms(t)
        off = dt - k * self.hyper.tau
        valid = (
            (k >= 1)
            & (k <= self.hyper.max_periods)
            & (np.abs(off) <= self.hyper.tau / 2.0)
            & (dt > 0)
        )
        mat = self.params.mu.copy()
        if np.any(valid):
            off = off[valid]
            w = (
                self.params.beta[self._u[sl][valid]]
                * np.exp(-(off * off) / (2.0 * self.hyper.sigma**2))
                * np.exp(-k[valid])
            )
            cells = self._u[sl][valid] * self.n_categories + self._c[sl][valid]
            mat += np.bincount(
                cells, weights=w, minlength=self.n_users * self.n_categories
            ).reshape(self.n_users, self.n_categories)
        return mat

    def _bound(self, t: float) -> float:
        dt, k, sl = self._kernel_terms(t)
        k = np.maximum(k, 1.0)
        live = k <= self.hyper.max_periods
        return self._total_mu + float(
            np.sum(self.params.beta[self._u[sl][live]] * np.exp(-k[live]))
        )

    def next_checkin(self, horizon: float) -> Checkin | None:
        """Sample the next event, or None when the horizon is reached first."""
        t = self.t_now
        rng = self.rng
        while True:
            bound = self._bound(t)
            if bound <= 0.0:
                self.t_now = horizon
                return None
            gap = rng.exponential(1.0 / bound)
            if gap > self._lookahead:
                t = t + self._lookahead
                if t >= horizon:
                    self.t_now = horizon
                    return None
                continue
            t = t + gap
            if t >= horizon:
                self.t_now = horizon
                return None
            mat = self.intensity_matrix(t)
            lam = float(mat.sum())
            if not np.isfinite(lam):
                raise NumericalError(f"non-finite intensity {lam} at t={t}")
            if rng.uniform() * bound <= lam:
                u = _pick(rng, mat.sum(axis=1))
                c = _pick(rng, mat[u])
                self.cache.advance(t)
                probs, _ = category_probs(
                    self.cache.source_mass,
                    self.params.alpha[:, u],
                    float(self.params.eta[u, c]),
                    self.cat_locs[c],
                    smoothing=self.hyper.popularity_smoothing,
                )
                l = int(self.cat_locs[c][_pick(rng, probs)])
                self._append(t, u, c)
                self.cache.add_event(u, l)
                self.t_now = t
                event = Checkin(t, u, c, l)
                self.events.append(event)
                return event


def simulate(
    params: ModelParams,
    hyper: HyperParams,
    location_categories: np.ndarray,
    rng: np.random.Generator,
    horizon: float | None = None,
    max_events: int | None = None,
    history: EventLog | None = None,
    start_time: float = 0.0,
) -> EventLog:
    """Run the sampler until the horizon or the requested event count.

    In pure event-count mode the returned log's horizon closes immediately
    after the last event.  If the process dies out (all-zero base rates with
    exhausted excitation) the log simply ends early.
    """
    if horizon is None and max_events is None:
        raise ValueError("need a horizon, a max_events count, or both")
    stop = float("inf") if horizon is None else float(horizon)
    sim = Simulator(params, hyper, location_categories, rng, history, start_time)
    out: list[Checkin] = []
    while max_events is None or len(out) < max_events:
        ev = sim.next_checkin(stop)
        if ev is None:
            break
        out.append(ev)
    if horizon is not None:
        end = float(horizon)
    elif out:
        end = float(np.nextafter(out[-1].t, np.inf))
    else:
        end = start_time
    return EventLog(
        out,
        params.n_users,
        params.n_categories,
        len(location_categories),
        end,
        location_categories,
    )


def next_event(
    ctx: IntensityContext,
    t_now: float,
    rng: np.random.Generator,
    horizon: float | None = None,
) -> Checkin | None:
    """One thinning step given the history in ctx.log; None past the horizon."""
    stop = ctx.log.horizon if horizon is None else float(horizon)
    if t_now >= stop:
        raise ValueError(f"t_now={t_now} is not before the horizon {stop}")
    before = ctx.log.replace(
        events=[e for e in ctx.log if e.t < t_now],
        horizon=max(t_now, np.nextafter(t_now, np.inf)),
    )
    sim = Simulator(
        ctx.params, ctx.hyper, ctx.log.location_categories, rng,
        history=before, start_time=t_now,
    )
    return sim.next_checkin(stop)
