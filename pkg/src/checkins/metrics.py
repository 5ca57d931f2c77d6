"""Evaluation measures: parameter error, held-out likelihood, network
recovery, ranking quality, sociality, and interevent histograms."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import EventLog, ModelParams, SocialGraph


def _flatten(params: ModelParams) -> np.ndarray:
    return np.concatenate(
        [params.mu.ravel(), params.beta.ravel(), params.alpha.ravel(), params.eta.ravel()]
    )


def param_mse(est: ModelParams, truth: ModelParams) -> float:
    """Mean squared error over all parameter entries jointly."""
    a, b = _flatten(est), _flatten(truth)
    if a.shape != b.shape:
        raise ValueError(f"parameter shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def param_mse_blocks(est: ModelParams, truth: ModelParams) -> dict[str, float]:
    """Per-block mean squared errors, plus the joint value under 'all'."""
    out = {
        name: float(np.mean((getattr(est, name) - getattr(truth, name)) ** 2))
        for name in ("mu", "beta", "alpha", "eta")
    }
    out["all"] = param_mse(est, truth)
    return out


def temporal_mse(est: ModelParams, truth: ModelParams) -> float:
    """Mean squared error over the time-component parameters (mu and beta)."""
    d = np.concatenate(
        [(est.mu - truth.mu).ravel(), (est.beta - truth.beta).ravel()]
    )
    return float(np.mean(d**2))


def avg_pred_loglik(
    scorer: Callable[[EventLog, tuple[float, float]], float],
    log: EventLog,
    window: tuple[float, float],
) -> float:
    """Held-out log-likelihood per event.

    `scorer(events, window)` returns the joint log-likelihood of the window's
    events (the caller fixes the model and the conditioning history); the
    result is divided by the number of events in the window.
    """
    a, b = window
    idx = log.window_slice(a, b)
    if len(idx) == 0:
        raise ValueError(f"no events in window ({a}, {b}]: mean is undefined")
    sub = log.replace(events=[log.checkin(i) for i in idx])
    return scorer(sub, window) / len(idx)


def edge_auc(alpha_est: np.ndarray, truth_graph: SocialGraph) -> float:
    """Area under the ROC of thresholding the off-diagonal influence scores
    against the true edge set.  Self-loops are excluded."""
    alpha_est = np.asarray(alpha_est, dtype=float)
    n = truth_graph.n
    if alpha_est.shape != (n, n):
        raise ValueError(f"score matrix shape {alpha_est.shape} does not match n={n}")
    off = ~np.eye(n, dtype=bool)
    scores = alpha_est[off]
    labels = truth_graph.adjacency_matrix()[off]
    n_pos = int(labels.sum())
    n_neg = int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one edge and one non-edge off the diagonal")
    ranks = rankdata(scores)  # average ranks handle ties as the ROC trapezoid does
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _rank_of(ranking: Sequence[int], truth: int) -> float:
    for pos, loc in enumerate(ranking, start=1):
        if loc == truth:
            return float(pos)
    return float("inf")


def accuracy_at_k(
    rankings: Sequence[Sequence[int]], truths: Sequence[int], k: int
) -> float:
    """Fraction of events whose true location is among the first k."""
    if len(rankings) != len(truths):
        raise ValueError("rankings and truths must have equal length")
    if len(rankings) == 0:
        raise ValueError("accuracy over zero events is undefined")
    hits = sum(_rank_of(r, t) <= k for r, t in zip(rankings, truths))
    return hits / len(rankings)


def ndcg_at_k(
    rankings: Sequence[Sequence[int]],
    truths: Sequence[int],
    k: int,
    literal: bool = False,
) -> float:
    """Rank-discounted credit for placing the true location high.

    Default: mean of 1/log2(1 + r) over events with 1 + r <= k, where r is
    the one-based rank of the true location.  `literal=True` uses the
    discount 1/log2(r) with a strict cutoff 1 + r < k instead; note that form
    degenerates (divides by zero) at rank one.
    """
    if len(rankings) != len(truths):
        raise ValueError("rankings and truths must have equal length")
    if len(rankings) == 0:
        raise ValueError("ndcg over zero events is undefined")
    total = 0.0
    for ranking, truth in zip(rankings, truths):
        r = _rank_of(ranking, truth)
        if np.isinf(r):
            continue
        if literal:
            if 1 + r < k:
                with np.errstate(divide="ignore"):
                    total += float(1.0 / np.log2(r))
        elif 1 + r <= k:
            total += float(1.0 / np.log2(1.0 + r))
    return total / len(rankings)


def sociality(
    log: EventLog,
    graph: SocialGraph,
    window: float | None = None,
    direction: str = "in",
) -> np.ndarray:
    """Per-user fraction of events at a location previously visited by the
    user or her friends.

    Friends default to influencers (in-neighbors); `direction="out"` uses
    followees instead.  `window` restricts "previously" to the trailing
    window hours.  Users without events get NaN.
    """
    if direction not in ("in", "out"):
        raise ValueError(f"direction must be 'in' or 'out', got {direction!r}")
    circle = [
        {u, *(graph.in_neighbors(u) if direction == "in" else graph.out_neighbors(u))}
        for u in range(log.n_users)
    ]
    hits = np.zeros(log.n_users)
    totals = np.zeros(log.n_users)
    by_loc: dict[int, list[int]] = {}
    for i in range(len(log)):
        by_loc.setdefault(int(log.location[i]), []).append(i)
    for l, idxs in by_loc.items():
        arr = np.array(idxs)
        times = log.t[arr]
        users = log.user[arr]
        for pos, i in enumerate(idxs):
            t_i, u_i = float(log.t[i]), int(log.user[i])
            totals[u_i] += 1
            lo = 0 if window is None else int(np.searchsorted(times, t_i - window, "left"))
            prior = users[lo:pos][times[lo:pos] < t_i]
            if any(int(v) in circle[u_i] for v in prior):
                hits[u_i] += 1
    with np.errstate(invalid="ignore"):
        return np.where(totals > 0, hits / np.maximum(totals, 1), np.nan)


def interevent_histogram(
    log: EventLog,
    user: int | None = None,
    category: int | None = None,
    bin_width: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of gaps between successive events within each (user,
    category) stream, optionally restricted to one user and/or category.

    Returns (counts, bin_edges); streams with fewer than two events
    contribute nothing.
    """
    if bin_width <= 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    users = [user] if user is not None else range(log.n_users)
    cats = [category] if category is not None else range(log.n_categories)
    gaps: list[np.ndarray] = []
    for u in users:
        for c in cats:
            times = log.times_for(u, c)
            if len(times) >= 2:
                gaps.append(np.diff(times))
    if not gaps:
        return np.zeros(0, dtype=np.int64), np.array([0.0])
    all_gaps = np.concatenate(gaps)
    edges = np.arange(0.0, all_gaps.max() + 2 * bin_width, bin_width)
    counts, edges = np.histogram(all_gaps, bins=edges)
    return counts, edges
