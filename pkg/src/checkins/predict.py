"""Forecasting the next check-in time and ranking candidate locations."""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.integrate import quad

from .core import EventLog, ModelParams, PredictionError
from .spatial import SpatialWeights, location_distribution
from .temporal import IntensityContext, intensity_integral

_MEDIAN_TARGET = float(np.log(2.0))
_TAIL_TARGET = float(-np.log(1e-3))  # 0.999 quantile


def invert_compensator(
    compensator: Callable[[float, float], float],
    t_now: float,
    target: float,
    tol: float = 1e-8,
    t_max: float | None = None,
) -> float:
    """Smallest t with compensator(t_now, t) >= target, by bisection.

    `compensator(a, b)` must be nondecreasing in b.  Raises PredictionError
    when the target is unreachable before `t_max` (or at all).
    """
    if target <= 0.0:
        return t_now
    hi = t_now + 1.0
    for _ in range(200):
        if compensator(t_now, hi) >= target:
            break
        if t_max is not None and hi >= t_max:
            raise PredictionError(
                f"cumulative intensity reaches only {compensator(t_now, t_max)} "
                f"< {target} by t={t_max}"
            )
        hi = t_now + 2.0 * (hi - t_now)
    else:
        raise PredictionError("cumulative intensity never reaches the target")
    lo = t_now
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if compensator(t_now, mid) >= target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _user_compensator(ctx: IntensityContext, u: int, category: int | None):
    cats = range(ctx.log.n_categories) if category is None else [category]

    def comp(a: float, b: float) -> float:
        return sum(intensity_integral(ctx, u, c, a, b) for c in cats)

    return comp


def predict_next_time(
    ctx: IntensityContext,
    u: int,
    t_now: float,
    mode: str = "median",
    category: int | None = None,
) -> float:
    """Predicted time of user u's next event after t_now.

    With `category=None` the prediction is for the user's next event in any
    category (the superposed process); otherwise for that category alone.
    `median` inverts the conditional cdf at one half; `mean` integrates the
    survival function up to the 0.999 quantile (the expectation of the next
    time capped there).
    """
    if mode not in ("median", "mean"):
        raise ValueError(f"mode must be 'median' or 'mean', got {mode!r}")
    comp = _user_compensator(ctx, u, category)
    total_mu = (
        float(ctx.params.mu[u].sum()) if category is None else float(ctx.params.mu[u, category])
    )
    if total_mu > 0.0:
        t_max = None
    else:
        # excitation alone: mass runs out max_periods past the last event
        times = ctx.log.t[ctx.log.user == u]
        last = float(times.max()) if times.size else 0.0
        t_max = max(t_now, last) + (ctx.hyper.max_periods + 1.0) * ctx.hyper.tau

    if mode == "median":
        return invert_compensator(comp, t_now, _MEDIAN_TARGET, t_max=t_max)
    upper = invert_compensator(comp, t_now, _TAIL_TARGET, t_max=t_max)
    tail, _ = quad(lambda s: np.exp(-comp(t_now, t_now + s)), 0.0, upper - t_now, limit=200)
    return t_now + float(tail)


def rank_locations(
    weights: SpatialWeights, params: ModelParams, u: int, c: int
) -> list[tuple[int, float]]:
    """Category-c locations by descending probability; ties by ascending id."""
    dist = location_distribution(weights, params, u, c)
    locs = np.flatnonzero(weights.location_categories == c)
    probs = dist.probs[locs]
    order = np.lexsort((locs, -probs))
    return [(int(locs[i]), float(probs[i])) for i in order]


def rank_hit_position(ranking: list[tuple[int, float]], true_location: int) -> int:
    """One-based rank of the true location inside a ranking."""
    for pos, (loc, _) in enumerate(ranking, start=1):
        if loc == true_location:
            return pos
    raise ValueError(f"location {true_location} not present in the ranking")


def sweep_rankings(
    log: EventLog,
    event_indices,
    params: ModelParams,
    hyper,
    include_probs: bool = False,
) -> list[list[int]]:
    """Model location ranking at each requested event's own time.

    One chronological pass with the incremental weight cache, so scoring a
    whole test set costs the same as replaying the log once.  Rankings use
    history strictly before each event (simultaneous events excluded).
    """
    from .spatial import WeightCache, category_probs

    cache = WeightCache(log.n_users, log.location_categories, hyper.spatial_decay)
    cat_locs = [log.locations_of(c) for c in range(log.n_categories)]
    want = {int(i) for i in event_indices}
    found: dict[int, list] = {}
    i = 0
    while i < len(log):
        t_i = float(log.t[i])
        cache.advance(t_i)
        j = i
        while j < len(log) and log.t[j] == t_i:
            j += 1
        for e in range(i, j):
            if e in want:
                u, c = int(log.user[e]), int(log.category[e])
                probs, _ = category_probs(
                    cache.source_mass, params.alpha[:, u], float(params.eta[u, c]),
                    cat_locs[c], smoothing=hyper.popularity_smoothing,
                )
                order = np.lexsort((cat_locs[c], -probs))
                if include_probs:
                    found[e] = [(int(cat_locs[c][k]), float(probs[k])) for k in order]
                else:
                    found[e] = [int(cat_locs[c][k]) for k in order]
        for e in range(i, j):
            cache.add_event(int(log.user[e]), int(log.location[e]))
        i = j
    return [found[int(e)] for e in event_indices]
