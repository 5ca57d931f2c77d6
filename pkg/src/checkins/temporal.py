"""Periodic self-history intensity, closed-form compensators, and the
time-component log-likelihood.

A user's intensity in a category is a base rate plus, for every past event
of that user in that category, a train of Gaussian bumps at lags of one
period, two periods, ... with bump k damped by exp(-k).  Bumps are truncated
at half a period on each side, so each elapsed offset maps to (at most) one
period index; see `KernelMode` for the two assignment rules.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .core import EventLog, HyperParams, KernelMode, ModelParams

_SQRT2 = np.sqrt(2.0)
_SQRT_HALF_PI = np.sqrt(np.pi / 2.0)


def kernel(offset, hyper: HyperParams):
    """Truncated Gaussian bump: exp(-offset^2 / 2 sigma^2) for |offset| <= tau/2.

    Accepts scalars or arrays; the truncation boundary is inclusive.
    """
    off = np.asarray(offset, dtype=float)
    inside = np.abs(off) <= hyper.tau / 2.0
    out = np.where(inside, np.exp(-(off * off) / (2.0 * hyper.sigma**2)), 0.0)
    return float(out) if np.isscalar(offset) else out


def period_index(dt, hyper: HyperParams):
    """Period index assigned to an elapsed offset dt > 0 under the kernel mode."""
    dt = np.asarray(dt, dtype=float)
    if hyper.kernel_mode is KernelMode.FLOOR:
        k = np.floor(dt / hyper.tau)
    else:
        # round half up so window edges tile contiguously
        k = np.floor(dt / hyper.tau + 0.5)
    return k.astype(np.int64)


def excitation(history_times: np.ndarray, t: float, hyper: HyperParams) -> float:
    """Sum of kernel-train values at time t for events at `history_times` < t."""
    times = np.asarray(history_times, dtype=float)
    times = times[times < t]
    if times.size == 0:
        return 0.0
    dt = t - times
    k = period_index(dt, hyper)
    off = dt - k * hyper.tau
    valid = (k >= 1) & (k <= hyper.max_periods) & (np.abs(off) <= hyper.tau / 2.0)
    if not np.any(valid):
        return 0.0
    off = off[valid]
    return float(
        np.sum(np.exp(-(off * off) / (2.0 * hyper.sigma**2)) * np.exp(-k[valid]))
    )


@dataclass(frozen=True)
class IntensityContext:
    """Bundles the event log, parameters, and hyper-parameters for evaluation."""

    log: EventLog
    params: ModelParams
    hyper: HyperParams

    def __post_init__(self) -> None:
        if self.params.n_users != self.log.n_users:
            raise ValueError(
                f"params cover {self.params.n_users} users, log has {self.log.n_users}"
            )
        if self.params.n_categories != self.log.n_categories:
            raise ValueError(
                f"params cover {self.params.n_categories} categories, "
                f"log has {self.log.n_categories}"
            )


def intensity(ctx: IntensityContext, u: int, c: int, t: float) -> float:
    """lambda_u(t, c): base rate plus the user's own in-category kernel train."""
    _check_ids(ctx, u, c)
    base = float(ctx.params.mu[u, c])
    beta = float(ctx.params.beta[u])
    if beta == 0.0:
        return base
    return base + beta * excitation(ctx.log.times_for(u, c), t, ctx.hyper)


def bump_masses(event_times: np.ndarray, a: float, b: float, hyper: HyperParams) -> np.ndarray:
    """Integral over [a, b] of each event's kernel train (without its beta weight).

    Closed form via the Gaussian error function.  An event's train only has
    support after the event, so events inside (a, b) automatically contribute
    only past their own time.
    """
    times = np.asarray(event_times, dtype=float)
    if times.size == 0 or b <= a:
        return np.zeros(times.shape)
    tau, sig = hyper.tau, hyper.sigma
    ks = np.arange(1, hyper.max_periods + 1, dtype=float)
    centers = times[:, None] + ks[None, :] * tau
    if hyper.kernel_mode is KernelMode.FLOOR:
        win_lo = centers
    else:
        win_lo = centers - tau / 2.0
    win_hi = centers + tau / 2.0
    lo = np.maximum(win_lo, a) - centers
    hi = np.minimum(win_hi, b) - centers
    good = hi > lo
    lo = np.where(good, lo, 0.0)
    hi = np.where(good, hi, 0.0)
    z = erf(hi / (sig * _SQRT2)) - erf(lo / (sig * _SQRT2))
    mass = sig * _SQRT_HALF_PI * z * np.exp(-ks)[None, :]
    return np.sum(np.where(good, mass, 0.0), axis=1)


def intensity_integral(ctx: IntensityContext, u: int, c: int, a: float, b: float) -> float:
    """Closed-form integral of lambda_u(., c) over [a, b]."""
    _check_ids(ctx, u, c)
    if a > b:
        raise ValueError(f"need a <= b, got a={a}, b={b}")
    if a < 0:
        raise ValueError(f"need a >= 0, got a={a}")
    base = float(ctx.params.mu[u, c]) * (b - a)
    beta = float(ctx.params.beta[u])
    if beta == 0.0:
        return base
    times = ctx.log.times_for(u, c)
    times = times[times < b]
    return base + beta * float(np.sum(bump_masses(times, a, b, ctx.hyper)))


def compensator(ctx: IntensityContext, a: float, b: float) -> float:
    """Integral over [a, b] of the intensity summed over all users and categories."""
    if a > b:
        raise ValueError(f"need a <= b, got a={a}, b={b}")
    log = ctx.log
    total = float(np.sum(ctx.params.mu)) * (b - a)
    if len(log) and np.any(ctx.params.beta > 0):
        sel = log.t < b
        masses = bump_masses(log.t[sel], a, b, ctx.hyper)
        total += float(np.sum(ctx.params.beta[log.user[sel]] * masses))
    return total


def temporal_loglik(
    ctx: IntensityContext, events: EventLog, window: tuple[float, float]
) -> float:
    """Log-likelihood of the time/user/category marks of `events` on `window`.

    The window is half-open, [a, b), matching the horizon convention (a
    split's test window starts exactly at the train horizon).  Each event is
    scored with the history of ctx.log strictly before it, so a test log can
    be scored with train history by putting the full log in ctx.  Returns
    -inf if any scored event has zero intensity.
    """
    a, b = window
    if len(events) and (events.t.min() < a or events.t.max() >= b):
        raise ValueError(f"events must lie within [{a}, {b})")
    total = -compensator(ctx, a, b)
    for i in range(len(events)):
        lam = intensity(ctx, int(events.user[i]), int(events.category[i]), float(events.t[i]))
        if lam <= 0.0:
            return float("-inf")
        total += np.log(lam)
    return float(total)


def event_kernel_sums(log: EventLog, hyper: HyperParams) -> np.ndarray:
    """For each event, the kernel-train sum of the user's earlier events in
    the same category, evaluated at the event's own time."""
    out = np.zeros(len(log))
    streams: dict[tuple[int, int], list[float]] = {}
    for i in range(len(log)):
        key = (int(log.user[i]), int(log.category[i]))
        past = streams.setdefault(key, [])
        if past:
            out[i] = excitation(np.asarray(past), float(log.t[i]), hyper)
        past.append(float(log.t[i]))
    return out


def _check_ids(ctx: IntensityContext, u: int, c: int) -> None:
    if not 0 <= u < ctx.log.n_users:
        raise ValueError(f"user {u} out of range 0..{ctx.log.n_users - 1}")
    if not 0 <= c < ctx.log.n_categories:
        raise ValueError(f"category {c} out of range 0..{ctx.log.n_categories - 1}")
