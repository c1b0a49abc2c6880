import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ncx2

from ivwings.asymptotics import psi
from ivwings.bs_core import implied_vol_from_log_price
from ivwings.cev import (
    CevParams,
    cev_call,
    cev_curve,
    cev_density,
    cev_iv_left_asym,
    cev_iv_right_asym,
    cev_log_call,
    cev_log_call_asymptote,
    cev_log_density,
    cev_log_mass_at_zero,
    cev_log_moment,
    cev_log_put,
    cev_mass_at_zero,
    cev_put,
    cev_sharp_right,
    schroder_call,
)
from ivwings.errors import DomainError

T = 1.0
CANON = [CevParams(100.0, 0.25, r) for r in (0.3, 0.5, 0.7)]


def ncx2_density(p, T, s):
    """Continuous part via the squared-Bessel / noncentral chi-square duality."""
    X = p.to_x(s)
    jac = 2.0 * (1.0 - p.rho) * X / s
    return ncx2.pdf(p.x0 / T, 4.0 - p.delta, X / T) / T * jac


class TestParams:
    def test_derived(self):
        p = CevParams(100.0, 0.25, 0.5)
        assert p.nu == -1.0
        assert p.delta == 0.0
        assert p.x0 == pytest.approx(6400.0, rel=1e-14)

    @pytest.mark.parametrize("args", [(0.0, 0.2, 0.5), (1.0, -0.2, 0.5), (1.0, 0.2, 1.0), (1.0, 0.2, 0.0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            CevParams(*args)


class TestAtom:
    def test_rho_half_closed_form(self):
        p = CevParams(2.0, 1.5, 0.5)
        for t in [0.3, 1.0, 4.0]:
            assert cev_mass_at_zero(p, t) == pytest.approx(math.exp(-p.x0 / (2 * t)), rel=1e-13)

    def test_canonical_log_mass(self):
        assert cev_log_mass_at_zero(CevParams(100.0, 0.25, 0.5), 1.0) == pytest.approx(-3200.0, rel=1e-14)

    def test_increasing_in_T(self):
        p = CevParams(1.0, 0.8, 0.6)
        m = [cev_mass_at_zero(p, t) for t in [0.05, 0.5, 2.0, 10.0]]
        assert np.all(np.diff(m) > 0.0)
        assert 0.0 < m[-1] < 1.0

    def test_small_T(self):
        p = CevParams(1.0, 0.3, 0.4)
        assert cev_mass_at_zero(p, 1e-4) == 0.0
        assert cev_log_mass_at_zero(p, 1e-4) < -1e4


class TestDensity:
    @pytest.mark.parametrize("p", CANON)
    @pytest.mark.parametrize("s", [30.0, 80.0, 100.0, 130.0, 250.0])
    def test_noncentral_chi2_oracle(self, p, s):
        ref = ncx2_density(p, T, s)
        if ref > 1e-250:
            assert cev_density(p, T, s) == pytest.approx(ref, rel=1e-9)

    @pytest.mark.parametrize("rho", [0.3, 0.5, 0.7])
    def test_small_x_power(self, rho):
        p = CevParams(100.0, 0.25, rho)
        r = [cev_log_density(p, T, x) - (1 - 2 * rho) * math.log(x) for x in [1e-8, 1e-12, 1e-16, 1e-20]]
        d = np.abs(np.diff(r))
        assert d[2] <= max(d[0], 1e-9)
        assert d[2] < 1e-4

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            cev_log_density(CANON[0], T, 0.0)


class TestIntegrity:
    @pytest.mark.parametrize("p", CANON)
    def test_normalization_and_mean(self, p):
        mass = math.exp(cev_log_moment(p, T, 0.0)) + cev_mass_at_zero(p, T)
        mean = math.exp(cev_log_moment(p, T, 1.0))
        assert mass == pytest.approx(1.0, abs=1e-8)
        assert mean == pytest.approx(p.s0, rel=1e-6)

    @pytest.mark.parametrize("p", CANON)
    def test_parity(self, p):
        for K in [50.0, 90.0, 100.0, 120.0, 200.0]:
            assert abs(cev_call(p, T, K) - cev_put(p, T, K) - (p.s0 - K)) <= 1e-8 * p.s0

    @pytest.mark.parametrize("p", CANON + [CevParams(1.0, 1.0, 0.5), CevParams(1.0, 2.0, 0.8)])
    def test_schroder_closed_form(self, p):
        for m in [0.6, 1.0, 1.5]:
            K = m * p.s0
            ref = schroder_call(p, T, K)
            assert cev_call(p, T, K) == pytest.approx(ref, rel=1e-8, abs=1e-12 * p.s0)

    def test_limits(self):
        p = CevParams(1.0, 0.5, 0.5)
        assert cev_call(p, T, 1e-12) == pytest.approx(1.0, rel=1e-10)
        m0 = cev_mass_at_zero(p, T)
        for K in [1e-3, 1e-6]:
            assert cev_put(p, T, K) >= K * m0
        assert cev_put(p, T, 1e-12) < 1e-11

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.2, 0.8), st.floats(0.2, 2.0), st.floats(0.3, 3.0))
    def test_parity_property(self, rho, sig, K):
        p = CevParams(1.0, sig, rho)
        assert abs(cev_call(p, T, K) - cev_put(p, T, K) - (1.0 - K)) <= 1e-10

    def test_convex_decreasing(self):
        p = CevParams(1.0, 0.6, 0.5)
        K = np.linspace(0.5, 2.0, 31)
        c = np.array([cev_call(p, T, k) for k in K])
        assert np.all(np.diff(c) < 0.0)
        assert np.all(np.diff(c, 2) > 0.0)


class TestWings:
    @pytest.mark.parametrize("rho", [0.3, 0.5, 0.7])
    def test_continuous_put_scaling(self, rho):
        p = CevParams(100.0, 0.25, rho)
        r = [cev_log_put(p, T, K, include_atom=False) - (3 - 2 * rho) * math.log(K) for K in [1e-8, 1e-12, 1e-16, 1e-20]]
        d = np.abs(np.diff(r))
        assert d[2] <= max(d[0], 1e-9)
        assert d[2] < 1e-4

    def test_atom_takes_over_put(self):
        # P(K)/K -> mass at zero, so the full put decays only like K
        p = CevParams(100.0, 0.25, 0.5)
        K = 1e-12
        assert cev_log_put(p, T, K) - math.log(K) == pytest.approx(cev_log_mass_at_zero(p, T), abs=1e-6)

    @pytest.mark.parametrize("p", CANON)
    def test_asymptote_bounded_ratio(self, p):
        r = [cev_log_call(p, T, m * p.s0) - cev_log_call_asymptote(p, T, m * p.s0) for m in np.geomspace(10, 1e3, 9)]
        assert max(r) - min(r) < 2.0

    @pytest.mark.parametrize("p", CANON)
    def test_asymptote_leading_order(self, p):
        r1 = 1.0 - p.rho
        target = 1.0 / (2 * T * p.sigma**2 * r1 * r1)
        ratios = [-cev_log_call_asymptote(p, T, K) / K ** (2 * r1) for K in [1e4, 1e8, 1e12]]
        assert np.all(np.diff(np.abs(np.array(ratios) / target - 1)) < 0)
        assert ratios[-1] == pytest.approx(target, rel=0.01)

    def test_right_asym_formula(self):
        p = CevParams(100.0, 0.25, 0.4)
        for K in [10.0, 1e3]:
            assert cev_iv_right_asym(p, T, K) * K**0.6 / math.log(K) == pytest.approx(0.25 * 0.6, rel=1e-14)
        with pytest.raises(DomainError):
            cev_iv_right_asym(p, T, 0.5)

    @pytest.mark.parametrize("rho", [0.3, 0.5, 0.7])
    def test_left_asym_without_loglog(self, rho):
        p = CevParams(100.0, 0.25, rho)
        for K in [1e-3, 1e-9]:
            got = cev_iv_left_asym(p, 2.0, K, with_loglog=False)
            assert got == pytest.approx(math.sqrt(psi(2 * (1 - rho)) * -math.log(K) / 2.0), rel=1e-12)

    def test_left_asym_domain(self):
        p = CevParams(100.0, 0.25, 0.5)
        with pytest.raises(DomainError):
            cev_iv_left_asym(p, T, 0.5)
        assert cev_iv_left_asym(p, T, 1e-3) > 0.0

    def test_oracle_gap_shrinks(self):
        p = CevParams(100.0, 0.25, 0.5)
        setup = p.setup(T)
        gaps = []
        for K in [1e3, 1e4, 1e5, 1e6]:
            iv = implied_vol_from_log_price(setup, K, cev_log_call(p, T, K), "call")
            gaps.append(abs(iv / cev_iv_right_asym(p, T, K) - 1.0))
        assert np.all(np.diff(gaps) < 0.0)

    def test_sharp_right_uses_asymptote(self):
        p = CevParams(100.0, 0.25, 0.5)
        e = cev_sharp_right(p, T, 1e4)
        assert e.main_term > 0.0 and e.correction_included

    def test_curve(self):
        p = CevParams(1.0, 0.5, 0.5)
        c = cev_curve(p, T, "call")
        assert c.price(1.2) == pytest.approx(cev_call(p, T, 1.2), rel=1e-15)
        assert c.log_density(1.0) == cev_log_density(p, T, 1.0)
        with pytest.raises(ValueError):
            cev_curve(p, T, "straddle")
