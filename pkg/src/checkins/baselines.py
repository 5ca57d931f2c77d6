"""Comparison models: exponentially self-exciting rates fitted per user
(own history, and own-plus-friends history) and two history-count location
rankers.

Both excited baselines use a unit-rate exponential kernel and are fitted by
the same per-user concave maximization as the main model's time component.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .core import EventLog, ModelParams, SocialGraph


@dataclass(eq=False)
class HawkesParams:
    """Self-exciting baseline: rate mu[u, c] + beta[u] * decayed own history."""

    mu: np.ndarray
    beta: np.ndarray

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)


@dataclass(eq=False)
class MultiHawkesParams:
    """Mutually exciting baseline: rate mu[u, c] + sum_v alpha[v, u] * decayed
    history of v in the category."""

    mu: np.ndarray
    alpha: np.ndarray

    def __post_init__(self) -> None:
        self.mu = np.asarray(self.mu, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)


def hawkes_intensity(log: EventLog, params: HawkesParams, u: int, c: int, t: float) -> float:
    times = log.times_for(u, c)
    times = times[times < t]
    return float(params.mu[u, c] + params.beta[u] * np.exp(-(t - times)).sum())


def multihawkes_intensity(
    log: EventLog, params: MultiHawkesParams, u: int, c: int, t: float
) -> float:
    sel = (log.category == c) & (log.t < t)
    contrib = params.alpha[log.user[sel], u] * np.exp(-(t - log.t[sel]))
    return float(params.mu[u, c] + contrib.sum())


def _category_mass_sweep(log: EventLog) -> np.ndarray:
    """M[j, v] = decayed mass of v's earlier events in event j's category."""
    n = log.n_users
    out = np.empty((len(log), n))
    mass = np.zeros((n, log.n_categories))
    t_prev = 0.0
    i = 0
    while i < len(log):
        t_i = float(log.t[i])
        if t_i > t_prev:
            mass *= np.exp(-(t_i - t_prev))
            t_prev = t_i
        j = i
        while j < len(log) and log.t[j] == t_i:
            j += 1
        for e in range(i, j):
            out[e] = mass[:, log.category[e]]
        for e in range(i, j):
            mass[log.user[e], log.category[e]] += 1.0
        i = j
    return out


def _exp_window_mass(times: np.ndarray, a: float, b: float) -> np.ndarray:
    """Integral over [a, b] of exp(-(s - t_i)) for each event time t_i < b."""
    lo = np.maximum(times, a)
    out = np.exp(-(lo - times)) - np.exp(-(b - times))
    return np.where(times < b, out, 0.0)


def fit_hawkes(log: EventLog, param_floor: float = 1e-8) -> HawkesParams:
    """Per-user maximum likelihood for the self-exciting baseline."""
    n, n_cats = log.n_users, log.n_categories
    sweep = _category_mass_sweep(log)
    comp_mass = _exp_window_mass(log.t, 0.0, log.horizon)
    mu = np.full((n, n_cats), param_floor)
    beta = np.full(n, param_floor)
    for u in range(n):
        idx = np.flatnonzero(log.user == u)
        cats = log.category[idx]
        own = sweep[idx, u]
        s_u = float(comp_mass[idx].sum())
        t_end = log.horizon

        def negated(x):
            m, b = x[:n_cats], x[n_cats]
            lam = m[cats] + b * own
            inv = 1.0 / lam
            val = -t_end * m.sum() - b * s_u + np.log(lam).sum()
            g_mu = np.bincount(cats, weights=inv, minlength=n_cats) - t_end
            g_b = float(own @ inv) - s_u
            return -val, -np.concatenate([g_mu, [g_b]])

        x0 = np.full(n_cats + 1, 0.05)
        res = minimize(
            negated, x0, jac=True, method="L-BFGS-B",
            bounds=[(param_floor, None)] * (n_cats + 1),
            options={"maxiter": 200, "ftol": 1e-14, "gtol": 1e-8},
        )
        mu[u] = res.x[:n_cats]
        beta[u] = res.x[n_cats]
    return HawkesParams(mu, beta)


def fit_multihawkes(
    log: EventLog, graph: SocialGraph, param_floor: float = 1e-8
) -> MultiHawkesParams:
    """Per-user maximum likelihood with excitation restricted to in-neighbors
    and self."""
    n, n_cats = log.n_users, log.n_categories
    support = graph.adjacency_matrix() | np.eye(n, dtype=bool)
    sweep = _category_mass_sweep(log)
    comp_mass = _exp_window_mass(log.t, 0.0, log.horizon)
    source_comp = np.bincount(log.user, weights=comp_mass, minlength=n)
    mu = np.full((n, n_cats), param_floor)
    alpha = np.zeros((n, n))
    for u in range(n):
        free = np.flatnonzero(support[:, u])
        idx = np.flatnonzero(log.user == u)
        cats = log.category[idx]
        g_mat = sweep[np.ix_(idx, free)]
        m_free = source_comp[free]
        t_end = log.horizon

        def negated(x):
            m, a = x[:n_cats], x[n_cats:]
            lam = m[cats] + g_mat @ a
            inv = 1.0 / lam
            val = -t_end * m.sum() - float(a @ m_free) + np.log(lam).sum()
            g_mu = np.bincount(cats, weights=inv, minlength=n_cats) - t_end
            g_a = g_mat.T @ inv - m_free
            return -val, -np.concatenate([g_mu, g_a])

        x0 = np.concatenate([np.full(n_cats, 0.05), np.full(len(free), 0.05)])
        res = minimize(
            negated, x0, jac=True, method="L-BFGS-B",
            bounds=[(param_floor, None)] * n_cats + [(0.0, None)] * len(free),
            options={"maxiter": 200, "ftol": 1e-14, "gtol": 1e-8},
        )
        mu[u] = res.x[:n_cats]
        alpha[free, u] = res.x[n_cats:]
    return MultiHawkesParams(mu, alpha)


def hawkes_loglik(
    log: EventLog, params: HawkesParams, events: EventLog, window: tuple[float, float]
) -> float:
    """Time-mark log-likelihood of `events` under the self-exciting baseline,
    with history drawn from `log`."""
    a, b = window
    total = -float(np.sum(params.mu)) * (b - a)
    mass = _exp_window_mass(log.t, a, b)
    total -= float(params.beta[log.user] @ mass)
    for i in range(len(events)):
        lam = hawkes_intensity(
            log, params, int(events.user[i]), int(events.category[i]), float(events.t[i])
        )
        if lam <= 0.0:
            return float("-inf")
        total += np.log(lam)
    return float(total)


def multihawkes_loglik(
    log: EventLog,
    params: MultiHawkesParams,
    events: EventLog,
    window: tuple[float, float],
) -> float:
    a, b = window
    total = -float(np.sum(params.mu)) * (b - a)
    mass = _exp_window_mass(log.t, a, b)
    total -= float(params.alpha[log.user].sum(axis=1) @ mass)
    for i in range(len(events)):
        lam = multihawkes_intensity(
            log, params, int(events.user[i]), int(events.category[i]), float(events.t[i])
        )
        if lam <= 0.0:
            return float("-inf")
        total += np.log(lam)
    return float(total)


def hawkes_user_compensator(log: EventLog, params: HawkesParams, u: int):
    """Callable (a, b) -> integrated rate of user u over [a, b], all categories."""
    own = log.t[log.user == u]
    mu_u = float(params.mu[u].sum())
    beta_u = float(params.beta[u])

    def comp(a: float, b: float) -> float:
        return mu_u * (b - a) + beta_u * float(_exp_window_mass(own, a, b).sum())

    return comp


def multihawkes_user_compensator(log: EventLog, params: MultiHawkesParams, u: int):
    mu_u = float(params.mu[u].sum())
    weights = params.alpha[log.user, u]

    def comp(a: float, b: float) -> float:
        return mu_u * (b - a) + float(weights @ _exp_window_mass(log.t, a, b))

    return comp


def most_popular_rank(log: EventLog, c: int, t: float) -> list[int]:
    """Category-c locations by total check-in count before t; ties by id."""
    locs = log.locations_of(c)
    sel = (log.t < t) & (log.category == c)
    counts = np.bincount(log.location[sel], minlength=log.n_locations)[locs]
    order = np.lexsort((locs, -counts))
    return [int(locs[i]) for i in order]


def periodic_loc_rank(
    log: EventLog, u: int, c: int, t: float, tau: float, window: float
) -> list[int]:
    """Category-c locations by the user's in-phase visit count before t.

    An earlier visit is in phase when its time-of-period lies within
    window/2 of t's (circularly, boundary inclusive).  This reads the
    period-location idea as per-user phase binning; see the README.
    """
    locs = log.locations_of(c)
    sel = (log.t < t) & (log.category == c) & (log.user == u)
    phase = np.abs(np.mod(log.t[sel], tau) - np.mod(t, tau))
    phase = np.minimum(phase, tau - phase)
    in_phase = phase <= window / 2.0
    counts = np.bincount(log.location[sel][in_phase], minlength=log.n_locations)[locs]
    order = np.lexsort((locs, -counts))
    return [int(locs[i]) for i in order]
