"""Constant elasticity of variance model dS = sigma S^rho dW with absorption at 0.

X = S^{2(1-rho)} / (sigma^2 (1-rho)^2) is a squared Bessel process of
dimension delta = (1-2rho)/(1-rho) < 2, so S_T has an atom at zero of mass
Q(alpha, x0/(2T)) with alpha = 1/(2(1-rho)) and an absolutely continuous
part obtained from the squared-Bessel transition density.  Prices are
integrals of that density, evaluated in log space so that wing values far
below the double-precision range stay available.  Rates are zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .asymptotics import WingExpansion, sharp_iv_right
from .bs_core import MarketSetup
from .curves import PricingCurve
from .errors import DomainError
from .quadrature import log_quad_halfline
from .special import log_bessel_i_scaled_logarg, log_reg_upper_gamma


@dataclass(frozen=True)
class CevParams:
    """Spot s0, scale sigma and elasticity exponent rho in (0, 1)."""

    s0: float
    sigma: float
    rho: float

    def __post_init__(self):
        if not (math.isfinite(self.s0) and self.s0 > 0.0):
            raise ValueError("s0 must be positive")
        if not (math.isfinite(self.sigma) and self.sigma > 0.0):
            raise ValueError("sigma must be positive")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")

    @property
    def nu(self) -> float:
        return -0.5 / (1.0 - self.rho)

    @property
    def alpha(self) -> float:
        """Bessel order -nu."""
        return 0.5 / (1.0 - self.rho)

    @property
    def delta(self) -> float:
        return (1.0 - 2.0 * self.rho) / (1.0 - self.rho)

    @property
    def x0(self) -> float:
        return self.to_x(self.s0)

    def to_x(self, s: float) -> float:
        return math.exp(self.log_x(s))

    def log_x(self, s: float) -> float:
        r1 = 1.0 - self.rho
        return 2.0 * r1 * math.log(s) - 2.0 * math.log(self.sigma * r1)

    def setup(self, T: float) -> MarketSetup:
        return MarketSetup(self.s0, 0.0, T)


def _check_T(T: float) -> None:
    if not (math.isfinite(T) and T > 0.0):
        raise ValueError("T must be positive")


# ---------------------------------------------------------------------------
# atom and density


def cev_log_mass_at_zero(params: CevParams, T: float) -> float:
    """log P(S_T = 0) = log Q(alpha, x0 / 2T)."""
    _check_T(T)
    return log_reg_upper_gamma(params.alpha, params.x0 / (2.0 * T))


def cev_mass_at_zero(params: CevParams, T: float) -> float:
    """P(S_T = 0).  Underflows to 0 for small T; use the log form there."""
    return math.exp(cev_log_mass_at_zero(params, T))


def cev_log_density(params: CevParams, T: float, s: float) -> float:
    """log density of the absolutely continuous part of S_T at s > 0."""
    _check_T(T)
    if not s > 0.0:
        raise ValueError("density is defined for s > 0")
    rho = params.rho
    x0 = params.x0
    lX = params.log_x(s)
    log_z = 0.5 * (math.log(x0) + lX) - math.log(T)
    diff = math.exp(0.5 * lX) - math.sqrt(x0)
    return (
        -math.log(2.0 * T)
        + 0.5 * params.nu * (lX - math.log(x0))
        - diff * diff / (2.0 * T)
        + log_bessel_i_scaled_logarg(params.alpha, log_z)
        + math.log(2.0 / (params.sigma**2 * (1.0 - rho)))
        + (1.0 - 2.0 * rho) * math.log(s)
    )


def cev_density(params: CevParams, T: float, s: float) -> float:
    return math.exp(cev_log_density(params, T, s))


class _Anchored:
    """log d(K e^t) - log d(K), computed without cancelling the large exponent."""

    def __init__(self, params: CevParams, T: float, K: float):
        self.p = params
        self.T = T
        self.K = K
        self.sqrt_x0 = math.sqrt(params.x0)
        self.log_sqrt_X0 = 0.5 * params.log_x(K)
        self.sqrt_X0 = math.exp(self.log_sqrt_X0)
        self.log_z0 = math.log(self.sqrt_x0) + self.log_sqrt_X0 - math.log(T)
        self.lb0 = log_bessel_i_scaled_logarg(params.alpha, self.log_z0)
        self.log_dK = cev_log_density(params, T, K)

    def __call__(self, t: float) -> float:
        p = self.p
        r1 = 1.0 - p.rho
        gap = self.sqrt_X0 * math.expm1(r1 * t)  # sqrt(X_t) - sqrt(X_0)
        sqrt_Xt = self.sqrt_X0 + gap
        expo = -gap * (sqrt_Xt + self.sqrt_X0 - 2.0 * self.sqrt_x0) / (2.0 * self.T)
        bes = log_bessel_i_scaled_logarg(p.alpha, self.log_z0 + r1 * t) - self.lb0
        return -0.5 * t + expo + bes + (1.0 - 2.0 * p.rho) * t

    def anchors(self, sign: int) -> list[float]:
        """t values of the bulk of sqrt(X_T) (about +-10 sd around sqrt(x0)), seen from K."""
        p = self.p
        r1 = 1.0 - p.rho
        out = []
        for j in range(-40, 41):
            root = self.sqrt_x0 + 0.25 * j * math.sqrt(self.T)
            if root > 0.0:
                # s = (sigma r1)^{1/r1} X^{1/(2 r1)}
                ls = (math.log(p.sigma * r1) + math.log(root)) / r1
                out.append(sign * (ls - math.log(self.K)))
        return out

    def first_step(self) -> float:
        eps = 1e-7
        slope = abs(self(eps)) / eps
        if slope > 1e3:
            eps = 1e-4 / slope
            slope = abs(self(eps)) / eps
        return 0.05 / max(1.0, slope)


def _log_expm1(t: float) -> float:
    return t + math.log(-math.expm1(-t)) if t > 1.0 else math.log(math.expm1(t))


def cev_log_call(params: CevParams, T: float, K: float) -> float:
    """log of the call price int_K^inf (s - K) d_T(s) ds."""
    _check_T(T)
    if not (math.isfinite(K) and K > 0.0):
        raise ValueError("strike must be positive")
    h = _Anchored(params, T, K)
    integral = log_quad_halfline(lambda t: _log_expm1(t) + t + h(t), h.first_step(), anchors=h.anchors(1))
    return 2.0 * math.log(K) + h.log_dK + integral


def cev_log_put(params: CevParams, T: float, K: float, *, include_atom: bool = True) -> float:
    """log of the put price K * P(S_T = 0) + int_0^K (K - s) d_T(s) ds.

    With ``include_atom=False`` only the absolutely continuous part is kept.
    """
    _check_T(T)
    if not (math.isfinite(K) and K > 0.0):
        raise ValueError("strike must be positive")
    h = _Anchored(params, T, K)
    integral = log_quad_halfline(
        lambda t: math.log(-math.expm1(-t)) - t + h(-t), h.first_step(), anchors=h.anchors(-1)
    )
    cont = 2.0 * math.log(K) + h.log_dK + integral
    if not include_atom:
        return cont
    atom = math.log(K) + cev_log_mass_at_zero(params, T)
    hi, lo = max(cont, atom), min(cont, atom)
    return hi + math.log1p(math.exp(lo - hi))


def cev_call(params: CevParams, T: float, K: float) -> float:
    """Call price with zero rate."""
    return math.exp(cev_log_call(params, T, K))


def cev_put(params: CevParams, T: float, K: float, *, include_atom: bool = True) -> float:
    """Put price with zero rate; the atom at zero contributes K * mass."""
    return math.exp(cev_log_put(params, T, K, include_atom=include_atom))


def cev_log_partial_moment(params: CevParams, T: float, p: float, K: float, upper: bool) -> float:
    """log of int s^p d_T(s) ds over (K, inf) if ``upper`` else over (0, K)."""
    _check_T(T)
    h = _Anchored(params, T, K)
    lead = (p + 1.0) * math.log(K) + h.log_dK
    if upper:
        return lead + log_quad_halfline(lambda t: (p + 1.0) * t + h(t), h.first_step(), anchors=h.anchors(1))
    if p <= -(2.0 - 2.0 * params.rho):
        return math.inf  # density ~ s^{1-2rho} at 0
    return lead + log_quad_halfline(lambda t: -(p + 1.0) * t + h(-t), h.first_step(), anchors=h.anchors(-1))


def cev_log_moment(params: CevParams, T: float, p: float) -> float:
    """log int_0^inf s^p d_T(s) ds (continuous part only)."""
    up = cev_log_partial_moment(params, T, p, params.s0, True)
    lo = cev_log_partial_moment(params, T, p, params.s0, False)
    hi, lo_ = max(up, lo), min(up, lo)
    return hi + math.log1p(math.exp(lo_ - hi))


def cev_curve(params: CevParams, T: float, side: str = "call") -> PricingCurve:
    """Exact CEV prices as a :class:`PricingCurve` carrying the density."""
    setup = params.setup(T)
    call = lambda K: cev_log_call(params, T, K)  # noqa: E731
    put = lambda K: cev_log_put(params, T, K)  # noqa: E731
    if side == "call":
        lp, other = call, put
    elif side == "put":
        lp, other = put, call
    else:
        raise ValueError("side must be 'call' or 'put'")
    return PricingCurve(
        lp, side, setup, lambda s: cev_log_density(params, T, s), name=f"cev-{side}", log_price_other=other
    )


# ---------------------------------------------------------------------------
# asymptotes


def cev_log_call_asymptote(params: CevParams, T: float, K: float) -> float:
    """log C~(K) = (5rho-4)/2 log K + s0^{1-rho} K^{1-rho} / (T sigma^2 (1-rho)^2)
    - K^{2(1-rho)} / (2 T sigma^2 (1-rho)^2), unit prefactor.

    The cross term uses the squared-Bessel scaling sigma^2 (1-rho)^2 of the
    density tail.
    """
    _check_T(T)
    rho, r1 = params.rho, 1.0 - params.rho
    scale = T * params.sigma**2 * r1 * r1
    a = K**r1
    b = params.s0**r1
    return 0.5 * (5.0 * rho - 4.0) * math.log(K) + b * a / scale - a * a / (2.0 * scale)


def cev_call_asymptote(params: CevParams, T: float, K: float) -> float:
    return math.exp(cev_log_call_asymptote(params, T, K))


def cev_iv_right_asym(params: CevParams, T: float, K: float) -> float:
    """sigma (1-rho) log K / K^{1-rho}."""
    if not K > 1.0:
        raise DomainError("needs K > 1")
    r1 = 1.0 - params.rho
    return params.sigma * r1 * math.log(K) / K**r1


def cev_iv_left_asym(params: CevParams, T: float, K: float, *, with_loglog: bool = True) -> float:
    """sqrt(2/T) [sqrt((3-2rho) l - 1/2 log l) - sqrt((2-2rho) l - 1/2 log l)], l = log(1/K)."""
    _check_T(T)
    if not 0.0 < K < 1.0:
        raise DomainError("needs 0 < K < 1")
    ell = -math.log(K)
    corr = 0.0
    if with_loglog:
        if not ell > math.e:
            raise DomainError("needs log(1/K) > e")
        corr = 0.5 * math.log(ell)
    a = (2.0 - 2.0 * params.rho) * ell - corr
    if not a > 0.0:
        raise DomainError("strike too close to 1 for the expansion")
    return math.sqrt(2.0 / T) * ell / (math.sqrt(ell + a) + math.sqrt(a))


def cev_sharp_right(params: CevParams, T: float, K: float, with_loglog: bool = True) -> WingExpansion:
    """Sharp right-wing expansion fed with the CEV call asymptote."""
    return sharp_iv_right(K, T=T, with_loglog=with_loglog, log_c_tilde=cev_log_call_asymptote(params, T, K))


def schroder_call(params: CevParams, T: float, K: float) -> Optional[float]:
    """Closed form through noncentral chi-square distributions (scipy.stats.ncx2).

    Serves as an independent check of the quadrature prices.
    """
    from scipy.stats import ncx2

    a = params.to_x(K) / T
    b = params.x0 / T
    d = params.delta
    return params.s0 * ncx2.sf(a, 4.0 - d, b) - K * ncx2.cdf(b, 2.0 - d, a)


def cev_oracle(params: CevParams, T: float):
    """Terminal law as a :class:`~ivwings.symmetry.DensityOracle`."""
    from .symmetry import DensityOracle

    width = params.sigma * params.s0 ** (params.rho - 1.0) * math.sqrt(T)
    return DensityOracle(
        lambda s: cev_log_density(params, T, s),
        params.setup(T),
        cev_log_mass_at_zero(params, T),
        min(width, 1.0),
        name=f"cev(rho={params.rho:g})",
        log_moment=lambda q: cev_log_moment(params, T, q),
    )
