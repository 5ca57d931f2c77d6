import math

import numpy as np
import pytest

from checkins import HyperParams, IntensityContext, KernelMode, ModelParams
from checkins.temporal import (
    bump_masses,
    compensator,
    intensity,
    intensity_integral,
    kernel,
    temporal_loglik,
)
from conftest import make_log, make_params


def quadrature_intensity(t, event_times, hyper, mu=0.0, beta=1.0):
    """Independent loop/scalar reimplementation of the intensity."""
    lam = mu
    for ti in event_times:
        if ti >= t:
            continue
        dt = t - ti
        if hyper.kernel_mode is KernelMode.FLOOR:
            k = math.floor(dt / hyper.tau)
        else:
            k = math.floor(dt / hyper.tau + 0.5)
        if k < 1 or k > hyper.max_periods:
            continue
        off = dt - k * hyper.tau
        if abs(off) > hyper.tau / 2:
            continue
        lam += beta * math.exp(-off * off / (2 * hyper.sigma**2)) * math.exp(-k)
    return lam


def quadrature_integral(event_times, a, b, hyper, mu=0.0, beta=1.0, step=1e-4):
    xs = np.arange(a, b, step) + step / 2
    return step * sum(quadrature_intensity(x, event_times, hyper, mu, beta) for x in xs)


def adaptive_integral(event_times, a, b, hyper, mu=0.0, beta=1.0):
    """scipy quadrature with breakpoints at the kernel's window edges."""
    from scipy.integrate import quad

    pts = set()
    for ti in event_times:
        for k in range(1, hyper.max_periods + 1):
            center = ti + k * hyper.tau
            lo = center if hyper.kernel_mode is KernelMode.FLOOR else center - hyper.tau / 2
            for p in (lo, center, center + hyper.tau / 2):
                if a < p < b:
                    pts.add(p)
            if center - hyper.tau > b:
                break
    val, _ = quad(
        lambda x: quadrature_intensity(x, event_times, hyper, mu, beta),
        a, b, points=sorted(pts), limit=max(200, 10 * len(pts) + 50),
    )
    return val


def ctx_with(events, mu=0.0, beta=1.0, hyper=None, horizon=1000.0):
    log = make_log([(t, 0, 0, 0) for t in events], n_users=1, n_categories=1,
                   n_locations=1, horizon=horizon)
    params = ModelParams(np.full((1, 1), mu), np.array([beta]),
                         np.zeros((1, 1)), np.full((1, 1), 0.05))
    return IntensityContext(log, params, hyper or HyperParams())


class TestKernel:
    def test_peak(self, hyper):
        assert kernel(0.0, hyper) == 1.0

    def test_outside_support(self, hyper):
        assert kernel(hyper.tau, hyper) == 0.0

    def test_half_hour_offset(self, hyper):
        assert kernel(0.5, hyper) == pytest.approx(math.exp(-0.5), rel=1e-12)

    def test_boundary_inclusive(self, hyper):
        assert kernel(hyper.tau / 2, hyper) > 0.0
        assert kernel(np.nextafter(hyper.tau / 2, 10.0), hyper) == 0.0

    def test_symmetric(self, hyper):
        assert kernel(-1.2, hyper) == kernel(1.2, hyper)


class TestIntensity:
    def test_empty_history_is_base(self, hyper):
        ctx = ctx_with([], mu=0.7)
        assert intensity(ctx, 0, 0, 5.0) == 0.7

    @pytest.mark.parametrize("mode", [KernelMode.FLOOR, KernelMode.NEAREST])
    def test_one_period_after_event(self, mode):
        ctx = ctx_with([0.0], hyper=HyperParams(kernel_mode=mode))
        assert intensity(ctx, 0, 0, 12.0) == pytest.approx(math.exp(-1), rel=1e-12)

    def test_half_period_floor_is_zero(self):
        ctx = ctx_with([0.0], hyper=HyperParams(kernel_mode=KernelMode.FLOOR))
        assert intensity(ctx, 0, 0, 6.01) == 0.0

    def test_half_period_nearest_is_negligible(self):
        # nearest-period offset is -5.99, inside the truncation boundary, so
        # the value is the (astronomically small) Gaussian tail, not exact 0
        ctx = ctx_with([0.0], hyper=HyperParams(kernel_mode=KernelMode.NEAREST))
        val = intensity(ctx, 0, 0, 6.01)
        assert val == pytest.approx(math.exp(-(5.99**2) / 0.5) * math.exp(-1), rel=1e-9)
        assert val < 1e-30

    def test_at_least_base_rate(self, rng):
        hyper = HyperParams()
        events = np.sort(rng.uniform(0, 50, 20))
        ctx = ctx_with(list(events), mu=0.3, beta=0.5, hyper=hyper)
        for t in rng.uniform(0, 90, 25):
            assert intensity(ctx, 0, 0, float(t)) >= 0.3

    def test_periodic_peaks_decay_geometrically(self):
        # single event at t0: maxima at t0 + k tau shrinking by e^-1 per period
        ctx = ctx_with([3.0])
        peaks = [intensity(ctx, 0, 0, 3.0 + k * 12.0) for k in range(1, 6)]
        for k, (a, b) in enumerate(zip(peaks, peaks[1:])):
            assert b / a == pytest.approx(math.exp(-1), rel=1e-12)

    def test_temporal_locality(self):
        hyper = HyperParams(kernel_mode=KernelMode.NEAREST)
        ctx = ctx_with([0.0], hyper=hyper)
        peak = intensity(ctx, 0, 0, 12.0)
        edge = intensity(ctx, 0, 0, 12.0 + 6.0)
        assert edge <= peak * math.exp(-(6.0**2) / (2 * 0.5**2)) + 1e-300

    def test_invalid_ids(self, hyper):
        ctx = ctx_with([])
        with pytest.raises(ValueError):
            intensity(ctx, 3, 0, 1.0)


class TestIntensityIntegral:
    def test_constant_rate(self):
        ctx = ctx_with([], mu=0.05)
        assert intensity_integral(ctx, 0, 0, 0.0, 10.0) == pytest.approx(0.5, rel=1e-12)

    def test_empty_interval(self):
        ctx = ctx_with([5.0], mu=0.3)
        assert intensity_integral(ctx, 0, 0, 7.0, 7.0) == 0.0

    def test_reversed_interval_raises(self):
        ctx = ctx_with([])
        with pytest.raises(ValueError):
            intensity_integral(ctx, 0, 0, 5.0, 1.0)

    # frozen values computed with the midpoint-quadrature oracle at step 1e-4
    @pytest.mark.parametrize(
        "mode,b,expected",
        [
            (KernelMode.FLOOR, 24.0, 0.23053425222394713),
            (KernelMode.NEAREST, 24.0, 0.5458773163269172),
            (KernelMode.NEAREST, 30.0, 0.6306861282059387),
        ],
    )
    def test_single_event_window_masses(self, mode, b, expected):
        ctx = ctx_with([0.0], hyper=HyperParams(kernel_mode=mode))
        assert intensity_integral(ctx, 0, 0, 0.0, b) == pytest.approx(expected, rel=1e-6)

    @pytest.mark.parametrize("mode", [KernelMode.FLOOR, KernelMode.NEAREST])
    def test_matches_quadrature_on_random_instances(self, mode, rng):
        hyper = HyperParams(kernel_mode=mode)
        for _ in range(3):
            events = list(np.sort(rng.uniform(0, 30, 4)))
            mu, beta = float(rng.uniform(0, 0.1)), float(rng.uniform(0.2, 1.0))
            a, b = sorted(rng.uniform(0, 45, 2))
            ctx = ctx_with(events, mu=mu, beta=beta, hyper=hyper)
            got = intensity_integral(ctx, 0, 0, float(a), float(b))
            want = adaptive_integral(events, float(a), float(b), hyper, mu, beta)
            assert got == pytest.approx(want, rel=1e-6, abs=1e-9)

    @pytest.mark.parametrize("mode", [KernelMode.FLOOR, KernelMode.NEAREST])
    def test_additive_over_subintervals(self, mode, rng):
        hyper = HyperParams(kernel_mode=mode)
        events = list(np.sort(rng.uniform(0, 40, 6)))
        ctx = ctx_with(events, mu=0.02, beta=0.7, hyper=hyper)
        for _ in range(20):
            a, c, b = sorted(rng.uniform(0, 80, 3))
            whole = intensity_integral(ctx, 0, 0, float(a), float(b))
            parts = intensity_integral(ctx, 0, 0, float(a), float(c)) + intensity_integral(
                ctx, 0, 0, float(c), float(b)
            )
            assert parts == pytest.approx(whole, rel=1e-10, abs=1e-12)

    def test_event_contributes_only_after_itself(self):
        # window ends before the first bump of a late event
        ctx = ctx_with([0.0, 20.0])
        only_first = ctx_with([0.0])
        got = intensity_integral(ctx, 0, 0, 0.0, 24.0)
        # the event at 20 has its first (floor-mode) bump at 32, outside [0, 24]
        assert got == pytest.approx(intensity_integral(only_first, 0, 0, 0.0, 24.0), rel=1e-12)


class TestTemporalLoglik:
    def test_pure_compensator(self):
        ctx = ctx_with([], mu=0.1, beta=0.0)
        empty = make_log([], n_users=1, n_categories=1, n_locations=1, horizon=1000.0)
        assert temporal_loglik(ctx, empty, (0.0, 10.0)) == pytest.approx(-1.0, rel=1e-12)

    def test_one_event_constant_rate(self):
        ctx = ctx_with([5.0], mu=0.1, beta=0.0)
        events = make_log([(5.0, 0, 0, 0)], n_users=1, n_categories=1, n_locations=1, horizon=1000.0)
        want = math.log(0.1) - 1.0
        assert temporal_loglik(ctx, events, (0.0, 10.0)) == pytest.approx(want, rel=1e-12)

    def test_unreachable_event_gives_minus_inf(self):
        ctx = ctx_with([5.0], mu=0.0, beta=1.0)
        events = make_log([(5.5, 0, 0, 0)], n_users=1, n_categories=1, n_locations=1, horizon=1000.0)
        assert temporal_loglik(ctx, events, (0.0, 10.0)) == float("-inf")

    def test_events_outside_window_rejected(self):
        ctx = ctx_with([5.0], mu=0.1)
        events = make_log([(5.0, 0, 0, 0)], n_users=1, n_categories=1, n_locations=1, horizon=1000.0)
        with pytest.raises(ValueError, match="within"):
            temporal_loglik(ctx, events, (6.0, 10.0))

    def test_compensator_sums_users_and_categories(self):
        log = make_log([(1.0, 0, 0, 0), (2.0, 1, 1, 2)], horizon=50.0)
        params = make_params(mu=0.05, beta=0.0)
        ctx = IntensityContext(log, params, HyperParams())
        # 2 users x 2 categories x 0.05 x 10
        assert compensator(ctx, 0.0, 10.0) == pytest.approx(2.0, rel=1e-12)


class TestBumpMasses:
    def test_total_mass_far_window(self, hyper):
        # all 50 periods inside the window: mass = sum e^-k * (half bump)
        masses = bump_masses(np.array([0.0]), 0.0, 1e4, hyper)
        want = sum(math.exp(-k) for k in range(1, 51)) * 0.5 * math.sqrt(math.pi / 2) * math.erf(
            6.0 / (0.5 * math.sqrt(2))
        )
        assert masses[0] == pytest.approx(want, rel=1e-12)
