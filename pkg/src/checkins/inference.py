"""EM fitting: closed-form responsibilities over influence channels and
per-user concave maximization of the expected complete log-likelihood.

The latent variable of each event is the channel that produced its location:
either a concrete influencer (any user v whose decayed history gives the
location positive weight) or the exploration channel.  The E-step normalizes
the channel shares; the M-step maximizes per user, with influence and
exploration weights optimized through their logs so positivity is structural
and the objective is concave.

Everything that does not depend on the parameters (kernel sums, compensator
masses, decayed source masses at event times) is swept once per fit and
reused across EM iterations.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize

from .core import (
    DegenerateDistributionError,
    EventLog,
    HyperParams,
    ModelParams,
    NumericalError,
    SocialGraph,
)
from .temporal import bump_masses, event_kernel_sums


@dataclass(frozen=True)
class EMConfig:
    """Knobs of the EM loop and the per-user inner optimizer."""

    max_em_iters: int = 50
    tol: float = 1e-4            # stop when the objective gain drops below this
    inner_gtol: float = 1e-6     # projected-gradient tolerance of the inner solver
    inner_max_iters: int = 200
    param_floor: float = 1e-8    # lower bound kept on mu and beta
    log_bound: float = 46.0      # box on log(alpha), log(eta); overflow guard
    log_ridge: float = 0.01      # ridge on log(alpha), log(eta) around the gauge
    eta_gauge: float = 0.025     # scale anchor for the influence/exploration ray
    alpha_cap: float | None = None   # optional upper trust bound on influence
    eta_cap: float | None = None     # optional upper trust bound on exploration
    n_jobs: int = 1

    def __post_init__(self) -> None:
        if min(self.tol, self.inner_gtol, self.param_floor) <= 0:
            raise ValueError("tolerances must be positive")
        if self.eta_gauge <= 0:
            raise ValueError("eta_gauge must be positive")
        if self.log_ridge < 0:
            raise ValueError("log_ridge must be nonnegative")


@dataclass
class Responsibilities:
    """Per-event posterior over influence channels, stored flat (CSR-like).

    Event i's candidate influencers are cand_users[offsets[i]:offsets[i+1]]
    with posterior weights cand_weights[...]; cand_mass holds the decayed
    source mass behind each candidate.  explore[i] is the exploration
    channel's share.  Each event's shares sum to one.
    """

    explore: np.ndarray
    cand_users: np.ndarray
    cand_weights: np.ndarray
    cand_mass: np.ndarray
    offsets: np.ndarray

    def influencers(self, i: int) -> np.ndarray:
        return self.cand_users[self.offsets[i]:self.offsets[i + 1]]

    def weights(self, i: int) -> np.ndarray:
        return self.cand_weights[self.offsets[i]:self.offsets[i + 1]]

    def __len__(self) -> int:
        return len(self.explore)


@dataclass
class FitResult:
    """Outcome of an EM run.

    loglik_trace[k] is the data log-likelihood (latent channels summed out)
    after k EM iterations; EM guarantees it never decreases.
    """

    params: ModelParams
    loglik_trace: list[float]
    em_iters_used: int
    user_converged: np.ndarray


class MStepResult(NamedTuple):
    params: ModelParams
    user_converged: np.ndarray


@dataclass
class EventStats:
    """Parameter-independent per-event quantities, swept once per log."""

    horizon: float
    kernel_sums: np.ndarray        # (K,) own in-category kernel sum at event time
    comp_masses: np.ndarray        # (K,) kernel-train mass of each event on [0, T]
    comp_by_uc: np.ndarray         # (N, C) comp_masses grouped by user, category
    cand_offsets: np.ndarray       # (K+1,) CSR offsets into the cand_* arrays
    cand_sources: np.ndarray       # flat source ids with positive mass at (c_i, l_i)
    cand_mass: np.ndarray          # flat decayed masses of those sources
    source_cat_mass: np.ndarray    # (K, N) per-source decayed mass in event's category
    pop_ratio: np.ndarray          # (K,) popularity ratio of the event's location
    events_by_user: list[np.ndarray]


def sweep_stats(log: EventLog, hyper: HyperParams) -> EventStats:
    """One chronological pass computing all parameter-independent statistics."""
    n, n_loc = log.n_users, log.n_locations
    k_events = len(log)
    cat_locs = [log.locations_of(c) for c in range(log.n_categories)]

    source_mass = np.zeros((n, n_loc))
    source_cat_mass = np.empty((k_events, n))
    pop_ratio = np.empty(k_events)
    cand_sources: list[np.ndarray] = []
    cand_mass: list[np.ndarray] = []
    counts = np.zeros(k_events, dtype=np.int64)

    decay = hyper.spatial_decay
    smoothing = hyper.popularity_smoothing
    t_prev = 0.0
    i = 0
    while i < k_events:
        t_i = float(log.t[i])
        if t_i > t_prev:
            source_mass *= np.exp(-decay * (t_i - t_prev))
            t_prev = t_i
        j = i
        while j < k_events and log.t[j] == t_i:
            j += 1
        for e in range(i, j):
            c_e, l_e = int(log.category[e]), int(log.location[e])
            col = source_mass[:, l_e]
            nz = np.flatnonzero(col > 0.0)
            cand_sources.append(nz)
            cand_mass.append(col[nz].copy())
            counts[e] = len(nz)
            block = source_mass[:, cat_locs[c_e]]
            source_cat_mass[e] = block.sum(axis=1)
            n_locs = len(cat_locs[c_e])
            m_tot = float(block.sum()) + smoothing * n_locs
            if m_tot > 0.0:
                pop_ratio[e] = (col.sum() + smoothing) / m_tot
            else:
                pop_ratio[e] = 1.0 / n_locs
        for e in range(i, j):
            source_mass[log.user[e], log.location[e]] += 1.0
        i = j

    offsets = np.concatenate([[0], np.cumsum(counts)])
    by_user = [np.flatnonzero(log.user == u) for u in range(n)]
    masses = bump_masses(log.t, 0.0, log.horizon, hyper)
    comp_by_uc = np.zeros((n, log.n_categories))
    np.add.at(comp_by_uc, (log.user, log.category), masses)
    return EventStats(
        horizon=log.horizon,
        kernel_sums=event_kernel_sums(log, hyper),
        comp_masses=masses,
        comp_by_uc=comp_by_uc,
        cand_offsets=offsets,
        cand_sources=(
            np.concatenate(cand_sources) if cand_sources else np.empty(0, dtype=np.int64)
        ),
        cand_mass=np.concatenate(cand_mass) if cand_mass else np.empty(0),
        source_cat_mass=source_cat_mass,
        pop_ratio=pop_ratio,
        events_by_user=by_user,
    )


def _segment_sums(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    cs = np.concatenate([[0.0], np.cumsum(values)])
    return cs[offsets[1:]] - cs[offsets[:-1]]


def e_step(
    log: EventLog,
    params: ModelParams,
    hyper: HyperParams,
    stats: EventStats | None = None,
) -> Responsibilities:
    """Posterior channel shares for every event, at the event's own time.

    The common normalizer of the location distribution cancels, so each
    candidate's share is proportional to alpha[v, u] times the candidate's
    decayed mass, and the exploration share to eta times the popularity
    ratio.
    """
    if stats is None:
        stats = sweep_stats(log, hyper)
    offsets = stats.cand_offsets
    ev_of = np.repeat(np.arange(len(log)), np.diff(offsets))
    cand_w = params.alpha[stats.cand_sources, log.user[ev_of]] * stats.cand_mass
    explore_w = params.eta[log.user, log.category] * stats.pop_ratio
    denom = explore_w + _segment_sums(cand_w, offsets)
    bad = np.flatnonzero(denom <= 0.0)
    if bad.size:
        i = int(bad[0])
        raise DegenerateDistributionError(
            f"event {i} (t={log.t[i]}, user={log.user[i]}, location={log.location[i]}) "
            "has no positive influence channel: zero exploration weight and no influencer"
        )
    explore = explore_w / denom
    cand_w = cand_w / denom[ev_of]
    keep = cand_w > 0.0
    counts = _segment_sums(keep.astype(float), offsets).astype(np.int64)
    new_offsets = np.concatenate([[0], np.cumsum(counts)])
    return Responsibilities(
        explore=explore,
        cand_users=stats.cand_sources[keep],
        cand_weights=cand_w[keep],
        cand_mass=stats.cand_mass[keep],
        offsets=new_offsets,
    )


@dataclass
class _UserProblem:
    """Per-user constant terms of the expected complete log-likelihood."""

    n_users: int
    n_categories: int
    horizon: float
    comp_masses: np.ndarray      # (C,) kernel compensator masses of the user's events
    cats: np.ndarray             # (n,) category of each of the user's events
    kernel_sums: np.ndarray      # (n,)
    cat_mass: np.ndarray         # (n, N)
    explore: np.ndarray          # (n,)
    infl_weight_by_source: np.ndarray   # (N,) sum of candidate weights per source
    const: float                 # channel terms that do not involve parameters
    explore_by_cat: np.ndarray   # (C,)

    @classmethod
    def build(
        cls, u: int, log: EventLog, resp: Responsibilities, stats: EventStats
    ) -> "_UserProblem":
        idx = stats.events_by_user[u]
        n_users, n_cats = log.n_users, log.n_categories
        cats = log.category[idx]
        explore = resp.explore[idx]
        infl_sum = np.zeros(n_users)
        const = 0.0
        for i in idx:
            sl = slice(resp.offsets[i], resp.offsets[i + 1])
            w = resp.cand_weights[sl]
            if w.size:
                np.add.at(infl_sum, resp.cand_users[sl], w)
                const += float(w @ np.log(resp.cand_mass[sl]))
        pos = explore > 0.0
        if np.any(pos):
            const += float(explore[pos] @ np.log(stats.pop_ratio[idx][pos]))
        explore_by_cat = np.bincount(cats, weights=explore, minlength=n_cats)
        return cls(
            n_users=n_users,
            n_categories=n_cats,
            horizon=stats.horizon,
            comp_masses=stats.comp_by_uc[u].copy(),
            cats=cats,
            kernel_sums=stats.kernel_sums[idx],
            cat_mass=stats.source_cat_mass[idx],
            explore=explore,
            infl_weight_by_source=infl_sum,
            const=const,
            explore_by_cat=explore_by_cat,
        )

    def value_and_grad(
        self,
        mu: np.ndarray,
        beta: float,
        alpha_col: np.ndarray,
        log_alpha: np.ndarray,
        log_eta: np.ndarray,
    ) -> tuple[float, np.ndarray, float, np.ndarray, np.ndarray]:
        """Objective and gradients in (mu, beta, log alpha, log eta) coordinates."""
        c_dim = self.n_categories
        t_end = self.horizon
        lam = mu[self.cats] + beta * self.kernel_sums
        if np.any(lam <= 0.0):
            zero = np.zeros
            return -np.inf, zero(c_dim), 0.0, zero(self.n_users), zero(c_dim)
        inv = 1.0 / lam
        value = -t_end * float(mu.sum()) - beta * float(self.comp_masses.sum())
        value += float(np.log(lam).sum())
        g_mu = np.bincount(self.cats, weights=inv, minlength=c_dim) - t_end
        g_beta = float(self.kernel_sums @ inv) - float(self.comp_masses.sum())

        eta = np.exp(log_eta)
        denom = eta[self.cats] + self.cat_mass @ alpha_col
        # channels with zero posterior weight contribute nothing, even when
        # their log-parameter is -inf
        iw = self.infl_weight_by_source
        value += float(iw[iw > 0.0] @ log_alpha[iw > 0.0])
        ec = self.explore_by_cat
        value += float(ec[ec > 0.0] @ log_eta[ec > 0.0])
        value += self.const
        value -= float(np.log(denom).sum())
        inv_d = 1.0 / denom
        g_la = self.infl_weight_by_source - alpha_col * (self.cat_mass.T @ inv_d)
        g_le = self.explore_by_cat - eta * np.bincount(
            self.cats, weights=inv_d, minlength=c_dim
        )
        return value, g_mu, g_beta, g_la, g_le


def _theta_split(theta: np.ndarray, n_users: int, n_cats: int):
    mu = theta[:n_cats]
    beta = float(theta[n_cats])
    log_alpha = theta[n_cats + 1:n_cats + 1 + n_users]
    log_eta = theta[n_cats + 1 + n_users:]
    return mu, beta, log_alpha, log_eta


def user_objective(
    u: int,
    log: EventLog,
    responsibilities: Responsibilities,
    hyper: HyperParams,
    theta: np.ndarray,
    stats: EventStats | None = None,
) -> tuple[float, np.ndarray]:
    """Expected complete log-likelihood of user u and its exact gradient.

    `theta` packs (mu[u, :], beta[u], log alpha[:, u], log eta[u, :]); the
    objective is concave in these coordinates.
    """
    if stats is None:
        stats = sweep_stats(log, hyper)
    theta = np.asarray(theta, dtype=float)
    expect = log.n_categories + 1 + log.n_users + log.n_categories
    if theta.shape != (expect,):
        raise ValueError(f"theta must have shape ({expect},), got {theta.shape}")
    mu, beta, log_alpha, log_eta = _theta_split(theta, log.n_users, log.n_categories)
    prob = _UserProblem.build(u, log, responsibilities, stats)
    value, g_mu, g_beta, g_la, g_le = prob.value_and_grad(
        mu, beta, np.exp(log_alpha), log_alpha, log_eta
    )
    return value, np.concatenate([g_mu, [g_beta], g_la, g_le])


def expected_complete_loglik(
    log: EventLog,
    responsibilities: Responsibilities,
    hyper: HyperParams,
    params: ModelParams,
    stats: EventStats | None = None,
) -> float:
    """The full expected complete log-likelihood, computed globally.

    Equals the sum of `user_objective` over all users.
    """
    if stats is None:
        stats = sweep_stats(log, hyper)
    with np.errstate(divide="ignore"):
        log_alpha = np.log(params.alpha)
        log_eta = np.log(params.eta)
    total = 0.0
    for u in range(log.n_users):
        prob = _UserProblem.build(u, log, responsibilities, stats)
        value, *_ = prob.value_and_grad(
            params.mu[u], float(params.beta[u]), params.alpha[:, u],
            log_alpha[:, u], log_eta[u],
        )
        total += value
    return total


def data_loglik(
    log: EventLog,
    params: ModelParams,
    hyper: HyperParams,
    stats: EventStats | None = None,
) -> float:
    """Log-likelihood of the log with the latent channels summed out.

    Temporal factor plus the location probabilities; this is the quantity the
    EM iterations push uphill.  Returns -inf when some event is impossible.
    """
    if stats is None:
        stats = sweep_stats(log, hyper)
    lam = params.mu[log.user, log.category] + params.beta[log.user] * stats.kernel_sums
    if np.any(lam <= 0.0):
        return float("-inf")
    # compensated summation keeps the trace's fp noise far below the
    # monotonicity slack even on large logs
    total = math.fsum(np.log(lam))
    total -= float(np.sum(params.mu)) * stats.horizon
    total -= float(params.beta[log.user] @ stats.comp_masses)

    offsets = stats.cand_offsets
    ev_of = np.repeat(np.arange(len(log)), np.diff(offsets))
    cand_w = params.alpha[stats.cand_sources, log.user[ev_of]] * stats.cand_mass
    numer = params.eta[log.user, log.category] * stats.pop_ratio
    numer = numer + _segment_sums(cand_w, offsets)
    w_dot = np.einsum("kn,nk->k", stats.source_cat_mass, params.alpha[:, log.user])
    denom = params.eta[log.user, log.category] + w_dot
    if np.any(numer <= 0.0) or np.any(denom <= 0.0):
        return float("-inf")
    total += math.fsum(np.log(numer) - np.log(denom))
    return float(total)


def _ridge_value(params: ModelParams, config: EMConfig, free_sets: list[np.ndarray]) -> float:
    """The M-step's log-scale ridge penalty at `params` (0 when disabled)."""
    if config.log_ridge == 0.0:
        return 0.0
    center = math.log(config.eta_gauge)
    lo = math.exp(-config.log_bound)
    total = 0.0
    for u, free in enumerate(free_sets):
        za = np.log(np.clip(params.alpha[free, u], lo, None)) - center
        ze = np.log(np.clip(params.eta[u], lo, None)) - center
        total += float(za @ za) + float(ze @ ze)
    return config.log_ridge * total


def fit_objective(
    log: EventLog,
    params: ModelParams,
    hyper: HyperParams,
    config: EMConfig,
    alpha_mask: np.ndarray | None = None,
    stats: EventStats | None = None,
) -> float:
    """The quantity the EM loop pushes uphill: data log-likelihood minus the
    M-step's ridge penalty."""
    free_sets = [
        np.flatnonzero(alpha_mask[:, u]) if alpha_mask is not None else np.arange(log.n_users)
        for u in range(log.n_users)
    ]
    return data_loglik(log, params, hyper, stats) - _ridge_value(params, config, free_sets)


def default_init(
    n_users: int,
    n_categories: int,
    rng: np.random.Generator,
    alpha_mask: np.ndarray | None = None,
) -> ModelParams:
    """Small positive starting point: rates uniform on [0.01, 0.1], influence 0.1."""
    mu = rng.uniform(0.01, 0.1, size=(n_users, n_categories))
    beta = rng.uniform(0.01, 0.1, size=n_users)
    eta = rng.uniform(0.01, 0.1, size=(n_users, n_categories))
    alpha = np.full((n_users, n_users), 0.1)
    if alpha_mask is not None:
        alpha = np.where(alpha_mask, alpha, 0.0)
    return ModelParams(mu, beta, alpha, eta)


def _optimize_user(
    u: int,
    prob: _UserProblem,
    init: ModelParams,
    config: EMConfig,
    free: np.ndarray,
) -> tuple[np.ndarray, float, float, np.ndarray, bool]:
    """Maximize one user's (optionally ridged) objective.

    The channel probabilities are invariant to scaling (alpha[:, u], eta[u])
    jointly, and sparse users can push ratios to the boundary (perfect
    separation), so the M-step subtracts a weak ridge on the log parameters
    centered at the gauge; see EMConfig.log_ridge.
    """
    n_cats = prob.n_categories
    floor = config.param_floor
    lo = -config.log_bound
    hi_a = math.log(config.alpha_cap) if config.alpha_cap else config.log_bound
    hi_e = math.log(config.eta_cap) if config.eta_cap else config.log_bound
    ridge = config.log_ridge
    center = math.log(config.eta_gauge)
    mu0 = np.clip(init.mu[u], floor, None)
    beta0 = max(float(init.beta[u]), floor)
    la0 = np.clip(np.log(np.clip(init.alpha[free, u], np.exp(lo), None)), lo, hi_a)
    le0 = np.clip(np.log(np.clip(init.eta[u], np.exp(lo), None)), lo, hi_e)
    x0 = np.concatenate([mu0, [beta0], la0, le0])
    nf = len(la0)

    def negated(x: np.ndarray) -> tuple[float, np.ndarray]:
        mu = x[:n_cats]
        beta = float(x[n_cats])
        la = np.full(prob.n_users, -np.inf)
        la[free] = x[n_cats + 1:n_cats + 1 + nf]
        le = x[n_cats + 1 + nf:]
        alpha_col = np.zeros(prob.n_users)
        alpha_col[free] = np.exp(la[free])
        v, g_mu, g_beta, g_la, g_le = prob.value_and_grad(mu, beta, alpha_col, la, le)
        g = np.concatenate([g_mu, [g_beta], g_la[free], g_le])
        if ridge > 0.0:
            z = x[n_cats + 1:] - center
            v -= ridge * float(z @ z)
            g[n_cats + 1:] -= 2.0 * ridge * z
        return -v, -g

    bounds = (
        [(floor, None)] * n_cats
        + [(floor, None)]
        + [(lo, hi_a)] * nf
        + [(lo, hi_e)] * n_cats
    )
    res = minimize(
        negated,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={
            "maxiter": config.inner_max_iters,
            "gtol": config.inner_gtol,
            "ftol": 1e-14,
        },
    )
    f0, _ = negated(x0)
    x = res.x if res.fun <= f0 else x0
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite iterate for user {u}: {x}")
    mu = x[:n_cats]
    beta = float(x[n_cats])
    alpha_col = np.zeros(prob.n_users)
    alpha_col[free] = np.exp(x[n_cats + 1:n_cats + 1 + nf])
    eta = np.exp(x[n_cats + 1 + nf:])
    return mu, beta, eta, alpha_col, bool(res.success)


def m_step(
    log: EventLog,
    responsibilities: Responsibilities,
    hyper: HyperParams,
    init: ModelParams,
    config: EMConfig | None = None,
    alpha_mask: np.ndarray | None = None,
    stats: EventStats | None = None,
) -> MStepResult:
    """Independent per-user maximization; never returns a worse point than init.

    Users whose inner solver stopped without meeting the gradient tolerance
    are flagged False; their best iterate is still used.
    """
    if config is None:
        config = EMConfig()
    if stats is None:
        stats = sweep_stats(log, hyper)
    n = log.n_users
    free_sets = [
        np.flatnonzero(alpha_mask[:, u]) if alpha_mask is not None else np.arange(n)
        for u in range(n)
    ]
    out = ModelParams(
        init.mu.copy(), init.beta.copy(), np.zeros((n, n)), init.eta.copy()
    )
    flags = np.ones(n, dtype=bool)

    def solve(u: int):
        prob = _UserProblem.build(u, log, responsibilities, stats)
        return _optimize_user(u, prob, init, config, free_sets[u])

    if config.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            results = list(pool.map(solve, range(n)))
    else:
        results = [solve(u) for u in range(n)]
    for u, (mu, beta, eta, alpha_col, ok) in enumerate(results):
        # Without the ridge nothing pins the (alpha[:, u], eta[u, :]) scale
        # ray; rescaling to the gauge then leaves every likelihood untouched.
        if config.log_ridge == 0.0 and eta.mean() > 0:
            scale = config.eta_gauge / eta.mean()
            eta = eta * scale
            alpha_col = alpha_col * scale
        out.mu[u] = mu
        out.beta[u] = beta
        out.eta[u] = eta
        out.alpha[:, u] = alpha_col
        flags[u] = ok
    return MStepResult(out, flags)


def fit(
    log: EventLog,
    hyper: HyperParams,
    config: EMConfig | None = None,
    init: ModelParams | None = None,
    alpha_mask: np.ndarray | SocialGraph | None = None,
    rng: np.random.Generator | None = None,
    callback: Callable[[int, ModelParams, float], None] | None = None,
) -> FitResult:
    """Alternate E and M steps until the likelihood gain falls below tolerance.

    `alpha_mask` restricts the influence support (a boolean matrix or a
    SocialGraph whose edges, plus self-loops, form the support); by default
    influence is dense so the network itself can be recovered.  `callback`
    receives (iteration, params, loglik) after every EM iteration.
    """
    if len(log) == 0:
        raise ValueError("cannot fit an empty event log")
    if config is None:
        config = EMConfig()
    if isinstance(alpha_mask, SocialGraph):
        alpha_mask = alpha_mask.adjacency_matrix() | np.eye(log.n_users, dtype=bool)
    stats = sweep_stats(log, hyper)
    if init is None:
        if rng is None:
            rng = np.random.default_rng(0)
        params = default_init(log.n_users, log.n_categories, rng, alpha_mask)
    else:
        params = init.copy()
    trace = [fit_objective(log, params, hyper, config, alpha_mask, stats)]
    flags = np.ones(log.n_users, dtype=bool)
    iters = 0
    for iteration in range(1, config.max_em_iters + 1):
        resp = e_step(log, params, hyper, stats)
        params, flags = m_step(log, resp, hyper, params, config, alpha_mask, stats)
        ll = fit_objective(log, params, hyper, config, alpha_mask, stats)
        trace.append(ll)
        iters = iteration
        if callback is not None:
            callback(iteration, params, ll)
        if ll - trace[-2] < config.tol:
            break
    return FitResult(params, trace, iters, flags)
