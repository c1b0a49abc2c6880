import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivwings.asymptotics import psi
from ivwings.bs_core import bs_call_price, bs_put_price
from ivwings.curves import bs_curve, geometric_grid
from ivwings.errors import OutsideStrip, WrongSide
from ivwings.heston_kou import (
    HestonKouParams,
    critical_moment_left,
    critical_moment_right,
    diffusion_moment_bounds,
    heston_kou_curve,
    kou_eta,
    kou_eta_quadrature,
    log_cf,
    log_moment,
    log_price_cf,
    martingale_drift,
    price_call_cf,
    price_put_cf,
    wing_slope_measured,
)
from ivwings.regvar import limit_slope_left, limit_slope_right

T = 1.0
# variance frozen at v0: Black-Scholes with sigma = 0.2
FLAT = HestonKouParams(100.0, 0.03, v0=0.04, theta=0.04, volvol=1e-8, corr=-0.5, lam=0.0)
TYPICAL = HestonKouParams(100.0, 0.02, v0=0.04, kappa=1.5, theta=0.05, volvol=0.6, corr=-0.6, lam=0.5, p_up=0.3, eta1=8.0, eta2=5.0)
JUMPS = HestonKouParams(1.0, 0.0, v0=0.04, kappa=1.5, theta=0.04, volvol=0.2, corr=-0.7, lam=0.1, p_up=0.4, eta1=4.0, eta2=3.0)
DIFFUSION = HestonKouParams(1.0, 0.0, v0=0.04, kappa=1.0, theta=0.04, volvol=1.0, corr=-0.5, lam=0.2, p_up=0.4, eta1=30.0, eta2=30.0)


def explosion_time(p: HestonKouParams, s: float) -> float:
    """Closed-form blow-up time of D' = xi^2 D^2/2 + (rho xi s - kappa) D + (s^2 - s)/2, D(0) = 0."""
    a = 0.5 * (s * s - s)
    b = p.corr * p.volvol * s - p.kappa
    disc = b * b - p.volvol**2 * (s * s - s)
    if a <= 0.0:
        return math.inf
    if disc < 0.0:
        r = math.sqrt(-disc)
        return 2.0 / r * (0.5 * math.pi - math.atan(b / r))
    if b < 0.0:
        return math.inf
    r = math.sqrt(disc)
    return math.log((b + r) / (b - r)) / r


class TestParams:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(spot=0.0),
            dict(corr=0.2),
            dict(eta1=1.0),
            dict(eta2=0.0),
            dict(p_up=1.0),
            dict(lam=-0.1),
            dict(volvol=0.0),
            dict(rate=-0.01),
        ],
    )
    def test_invalid(self, kw):
        base = dict(spot=100.0)
        base.update(kw)
        with pytest.raises(ValueError):
            HestonKouParams(**base)

    def test_q_down(self):
        assert HestonKouParams(1.0, p_up=0.3).q_down == pytest.approx(0.7)


class TestJumpCompensator:
    def test_example(self):
        assert kou_eta(HestonKouParams(1.0, p_up=0.5, eta1=2.0, eta2=3.0)) == pytest.approx(0.375, abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(1.05, 60.0), st.floats(0.05, 60.0))
    def test_quadrature_cross_check(self, p, e1, e2):
        params = HestonKouParams(1.0, p_up=p, eta1=e1, eta2=e2)
        assert abs(kou_eta(params) - kou_eta_quadrature(params)) <= 1e-10 * max(1.0, abs(kou_eta(params)))

    def test_vanishing_jumps(self):
        assert abs(kou_eta(HestonKouParams(1.0, eta1=1e9, eta2=1e9))) < 1e-8

    def test_drift(self):
        assert martingale_drift(HestonKouParams(1.0, rate=0.04, lam=0.0)) == 0.04
        p = HestonKouParams(1.0, rate=0.0, lam=1.0, p_up=0.5, eta1=2.0, eta2=3.0)
        assert martingale_drift(p) == pytest.approx(-0.375, abs=1e-15)


class TestCharacteristicFunction:
    def test_normalization(self):
        assert log_cf(TYPICAL, T, 0.0) == 0.0

    def test_black_scholes_degeneration(self):
        u = 1.3 - 0.5j
        lF = math.log(FLAT.spot) + FLAT.rate * T
        ref = 1j * u * (lF - 0.5 * 0.04 * T) - 0.5 * 0.04 * T * u * u
        assert abs(log_cf(FLAT, T, u) - ref) <= 1e-6

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-40.0, 40.0), st.floats(-1.5, 1.0))
    def test_conjugate_symmetry(self, re, im):
        u = complex(re, im)
        assert abs(log_cf(TYPICAL, T, -u.conjugate()) - log_cf(TYPICAL, T, u).conjugate()) <= 1e-10 * max(
            1.0, abs(log_cf(TYPICAL, T, u))
        )

    @pytest.mark.parametrize("params", [TYPICAL, JUMPS, DIFFUSION])
    def test_martingale_point(self, params):
        F = params.spot * math.exp(params.rate * T)
        assert math.exp(log_moment(params, T, 1.0)) == pytest.approx(F, rel=1e-6)

    @pytest.mark.parametrize("R", [0.0, 1.5, -1.0])
    def test_continuous_branch(self, R):
        v = np.linspace(0.0, 60.0, 3001)
        vals = np.array([log_cf(TYPICAL, T, complex(x, -R)) for x in v])
        # a principal-branch jump would show as a 2 pi step in the imaginary part
        assert np.max(np.abs(np.diff(vals.imag))) < 0.5

    def test_outside_strip(self):
        with pytest.raises(OutsideStrip):
            log_cf(TYPICAL, T, -1j * (TYPICAL.eta1 + 0.1))
        with pytest.raises(OutsideStrip):
            log_cf(TYPICAL, T, 1j * (TYPICAL.eta2 + 0.1))

    def test_moment_of_jump_part(self):
        # with the variance part nearly deterministic, E[X^s] factorizes
        p = HestonKouParams(1.0, v0=0.04, theta=0.04, volvol=1e-8, corr=0.0, lam=0.7, p_up=0.3, eta1=5.0, eta2=4.0)
        s = 2.5
        jump = p.lam * T * (p.p_up * p.eta1 / (p.eta1 - s) + p.q_down * p.eta2 / (p.eta2 + s) - 1.0 - s * kou_eta(p))
        assert log_moment(p, T, s) == pytest.approx(0.5 * 0.04 * T * (s * s - s) + jump, rel=1e-7)


class TestPricing:
    def test_black_scholes_degeneration(self):
        s = FLAT.setup(T)
        for K in geometric_grid(20.0, 500.0, 25):
            assert abs(price_call_cf(FLAT, T, K) - bs_call_price(s, K, 0.2)) <= 1e-6 * FLAT.spot
            assert abs(price_put_cf(FLAT, T, K) - bs_put_price(s, K, 0.2)) <= 1e-6 * FLAT.spot

    def test_wing_log_prices(self):
        # corr = 0 removes the leading volvol correction at large moment orders
        p = HestonKouParams(100.0, 0.0, v0=0.04, theta=0.04, volvol=1e-8, corr=0.0, lam=0.0)
        c = bs_curve(p.setup(T), 0.2, "call")
        for K in [1e3, 1e4]:
            assert log_price_cf(p, T, K, "call") == pytest.approx(c.log_price(K), abs=1e-8)

    def test_small_strike(self):
        p = HestonKouParams(100.0, 0.0, **{k: getattr(TYPICAL, k) for k in ("v0", "kappa", "theta", "volvol", "corr")})
        assert price_call_cf(p, T, 1e-6) == pytest.approx(100.0, rel=1e-7)

    @pytest.mark.parametrize("params", [TYPICAL, JUMPS, DIFFUSION])
    def test_parity(self, params):
        s = params.setup(T)
        for m in [0.5, 0.9, 1.0, 1.2, 2.0]:
            K = m * params.spot
            lhs = price_call_cf(params, T, K) - price_put_cf(params, T, K)
            assert lhs == pytest.approx(params.spot - K * s.discount, abs=1e-9 * params.spot)

    @pytest.mark.parametrize("params", [TYPICAL, JUMPS, DIFFUSION])
    def test_convex_decreasing(self, params):
        K = np.linspace(0.5, 2.0, 31) * params.spot
        c = np.array([price_call_cf(params, T, k) for k in K])
        assert np.all(np.diff(c) < 0.0)
        assert np.all(np.diff(c, 2) > 0.0)

    def test_monte_carlo_smoke(self):
        p = TYPICAL
        rng = np.random.default_rng(20240607)
        n, steps = 100_000, 200
        dt = T / steps
        mu = martingale_drift(p)
        lx = np.full(n, math.log(p.spot))
        v = np.full(n, p.v0)
        for _ in range(steps):
            vp = np.maximum(v, 0.0)
            z1 = rng.standard_normal(n)
            z2 = p.corr * z1 + math.sqrt(1.0 - p.corr**2) * rng.standard_normal(n)
            nj = rng.poisson(p.lam * dt, n)
            jump = np.zeros(n)
            hit = np.nonzero(nj)[0]
            for i in hit:
                up = rng.random(nj[i]) < p.p_up
                size = np.where(up, rng.exponential(1.0 / p.eta1, nj[i]), -rng.exponential(1.0 / p.eta2, nj[i]))
                jump[i] = size.sum()
            lx += (mu - 0.5 * vp) * dt + np.sqrt(vp * dt) * z1 + jump
            v = v + p.kappa * (p.theta - vp) * dt + p.volvol * np.sqrt(vp * dt) * z2
        disc = math.exp(-p.rate * T)
        for K in [80.0, 100.0, 130.0]:
            pay = disc * np.maximum(np.exp(lx) - K, 0.0)
            se = pay.std() / math.sqrt(n)
            assert abs(pay.mean() - price_call_cf(p, T, K)) < 4.0 * se + 0.02

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            log_price_cf(TYPICAL, T, -1.0)
        with pytest.raises(ValueError):
            log_price_cf(TYPICAL, T, 100.0, "straddle")


class TestCriticalMoments:
    @pytest.mark.parametrize("params", [TYPICAL, DIFFUSION, JUMPS])
    def test_explosion_time_oracle(self, params):
        s_minus, s_plus = diffusion_moment_bounds(params, T)
        for s in (s_plus, -s_minus):
            assert explosion_time(params, s) == pytest.approx(T, rel=1e-3)
            step = 0.01 if s > 0 else -0.01
            assert explosion_time(params, s + step) < T < explosion_time(params, s - step)

    def test_pure_heston(self):
        p = HestonKouParams(1.0, v0=0.04, kappa=1.5, theta=0.04, volvol=0.5, corr=-0.5, lam=0.0, eta1=1.5)
        s_minus, s_plus = diffusion_moment_bounds(p, T)
        assert critical_moment_right(p, T) == pytest.approx(s_plus - 1.0, abs=1e-12)
        assert critical_moment_left(p, T) == pytest.approx(s_minus, abs=1e-12)
        assert critical_moment_right(p, T) > 1.0

    def test_heavy_jumps(self):
        p = HestonKouParams(1.0, lam=1.0, eta1=1.0001)
        assert critical_moment_right(p, T) == pytest.approx(1e-4, abs=1e-9)

    def test_min_structure_right(self):
        base = dict(spot=1.0, v0=0.04, kappa=1.0, theta=0.04, volvol=1.0, corr=-0.5, lam=0.3)
        s_plus = diffusion_moment_bounds(HestonKouParams(**base), T)[1]
        for e1 in (s_plus + 1.0, s_plus + 10.0):
            assert critical_moment_right(HestonKouParams(**base, eta1=e1), T) == pytest.approx(s_plus - 1.0)
        for e1 in (s_plus - 1.0, 0.5 * (1.0 + s_plus)):
            assert critical_moment_right(HestonKouParams(**base, eta1=e1), T) == pytest.approx(e1 - 1.0)

    def test_min_structure_left(self):
        base = dict(spot=1.0, v0=0.04, kappa=1.0, theta=0.04, volvol=1.0, corr=-0.5, lam=0.3)
        s_minus = diffusion_moment_bounds(HestonKouParams(**base), T)[0]
        for e2 in (s_minus + 1.0, s_minus + 10.0):
            assert critical_moment_left(HestonKouParams(**base, eta2=e2), T) == pytest.approx(s_minus)
        for e2 in (0.5 * s_minus, 0.9 * s_minus):
            assert critical_moment_left(HestonKouParams(**base, eta2=e2), T) == pytest.approx(e2)

    def test_frozen_variance_has_no_bound(self):
        assert critical_moment_right(FLAT, T) == math.inf

    def test_longer_maturity_explodes_sooner(self):
        a = diffusion_moment_bounds(TYPICAL, 0.5)[1]
        b = diffusion_moment_bounds(TYPICAL, 2.0)[1]
        assert b < a

    @pytest.mark.parametrize("params", [JUMPS, DIFFUSION])
    def test_right_slope_estimator(self, params):
        fit = limit_slope_right(heston_kou_curve(params, T, "call"), geometric_grid(math.exp(2), math.exp(14), 30))
        assert fit.extrapolated == pytest.approx(critical_moment_right(params, T), rel=0.05)

    @pytest.mark.parametrize("params", [JUMPS, DIFFUSION])
    def test_left_slope_estimator(self, params):
        fit = limit_slope_left(heston_kou_curve(params, T, "put"), geometric_grid(math.exp(-14), math.exp(-2), 30))
        assert fit.extrapolated == pytest.approx(critical_moment_left(params, T), rel=0.05)


class TestWingSlope:
    def test_flat_vol_injection(self):
        s = JUMPS.setup(T)
        grid = geometric_grid(math.exp(1), math.exp(12), 30)
        m = wing_slope_measured(None, T, "right", grid, curve=bs_curve(s, 0.25, "call"))
        assert m.vanishing
        assert m.fit.extrapolated == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("params", [JUMPS, DIFFUSION])
    def test_right_matches_critical_moment(self, params):
        grid = geometric_grid(math.exp(2), math.exp(8), 20)
        m = wing_slope_measured(params, T, "right", grid)
        assert not m.vanishing
        assert m.value == pytest.approx(psi(critical_moment_right(params, T)), rel=0.1)

    @pytest.mark.parametrize("params", [JUMPS, DIFFUSION])
    def test_left_matches_critical_moment(self, params):
        grid = geometric_grid(math.exp(-8), math.exp(-2), 20)
        m = wing_slope_measured(params, T, "left", grid)
        assert m.value == pytest.approx(psi(critical_moment_left(params, T)), rel=0.1)

    def test_supports_shifted_jump_constant(self):
        m = wing_slope_measured(JUMPS, T, "right", geometric_grid(math.exp(2), math.exp(8), 20))
        assert abs(m.value - psi(JUMPS.eta1 - 1.0)) < abs(m.value - psi(JUMPS.eta1))

    def test_errors(self):
        with pytest.raises(ValueError):
            wing_slope_measured(JUMPS, T, "up", [2.0])
        with pytest.raises(ValueError):
            wing_slope_measured(JUMPS, T, "right", geometric_grid(0.1, 10.0, 20))
        with pytest.raises(WrongSide):
            wing_slope_measured(None, T, "right", geometric_grid(2.0, 1e4, 20), curve=bs_curve(JUMPS.setup(T), 0.2, "put"))

    def test_curve_implied_vol(self):
        c = heston_kou_curve(FLAT, T, "call")
        for K in [60.0, 100.0, 180.0]:
            assert c.implied_vol(K) == pytest.approx(0.2, abs=1e-7)
