"""Black-Scholes prices, vega and implied-volatility inversion.

Out-of-the-money prices are evaluated through the scaled complementary error
function, so that both the price and its logarithm stay accurate far into
the wings, where raw prices underflow.  Implied volatility is solved on the
log of the out-of-the-money price; the in-the-money side is mapped across by
put-call parity first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import erfcx, ndtr

from .errors import NoConvergence, PriceOutOfBounds

Side = Literal["call", "put"]

SIGMA_MIN = 1e-8
SIGMA_MAX = 5.0
PRICE_RTOL = 1e-12  # absolute price tolerance, in units of spot
_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# above this d the plain N(d) difference is safe and erfcx would overflow
_ERFCX_SWITCH = 3.0


@dataclass(frozen=True)
class MarketSetup:
    """Fixed-maturity slice: spot, flat rate, maturity in years."""

    spot: float
    rate: float
    maturity: float

    def __post_init__(self):
        for name in ("spot", "rate", "maturity"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.spot <= 0.0:
            raise ValueError("spot must be positive")
        if self.maturity <= 0.0:
            raise ValueError("maturity must be positive")
        if self.rate < 0.0:
            raise ValueError("rate must be nonnegative")

    @property
    def discount(self) -> float:
        return math.exp(-self.rate * self.maturity)

    @property
    def forward(self) -> float:
        return self.spot * math.exp(self.rate * self.maturity)


@dataclass(frozen=True)
class OptionQuote:
    strike: float
    price: float
    side: Side = "call"

    def __post_init__(self):
        if self.side not in ("call", "put"):
            raise ValueError(f"side must be 'call' or 'put', got {self.side!r}")
        if not (math.isfinite(self.strike) and self.strike > 0.0):
            raise ValueError("strike must be positive and finite")
        if not math.isfinite(self.price) or self.price < 0.0:
            raise ValueError("price must be finite and nonnegative")


def _check(K: float, sigma: float) -> None:
    if not (math.isfinite(K) and math.isfinite(sigma)):
        raise ValueError("non-finite strike or volatility")
    if K <= 0.0:
        raise ValueError("strike must be positive")
    if sigma < 0.0:
        raise ValueError("volatility must be nonnegative")


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _mills(x: float) -> float:
    """Mills ratio N(-x) / phi(x)."""
    return math.sqrt(math.pi / 2.0) * erfcx(x / _SQRT2)


def _one_minus_t_mills(t):
    """1 - t M(t) = -M'(t), accurate for large t where it is ~ 1/t^2."""
    t = np.asarray(t, dtype=float)
    out = 1.0 - t * math.sqrt(math.pi / 2.0) * erfcx(t / _SQRT2)
    big = t >= 8.0
    if np.any(big):
        tb = t[big]
        inv2 = 1.0 / (tb * tb)
        term = inv2.copy()
        acc = term.copy()
        for n in range(2, 40):
            term = -term * (2 * n - 1) * inv2
            acc += term
            if np.all(np.abs(term) < 1e-17 * np.abs(acc)):
                break
        out[big] = acc
    return out


def _mills_diff(x: float, h: float) -> float:
    """M(x) - M(x + h) for h > 0, without cancellation when h is small."""
    if h >= 0.5 * max(x, 1.0):
        return _mills(x) - _mills(x + h)
    half = 0.5 * h
    nodes = x + half * (_GL_X + 1.0)
    return float(half * np.dot(_GL_W, _one_minus_t_mills(nodes)))


def _log_otm_normalized(k: float, s: float) -> float:
    """log of the OTM price divided by spot, for log-moneyness k and total vol s > 0.

    k >= 0 gives the call, k < 0 the put.  Uses
    OTM = phi(d1) [M(a) - M(a + s)] with a = -d1 (call) or a = d2 (put),
    since e^k phi(d2) = phi(d1).
    """
    d1 = -k / s + 0.5 * s
    d2 = d1 - s
    if k >= 0.0:
        if d1 < _ERFCX_SWITCH:
            return -0.5 * d1 * d1 - _LOG_SQRT_2PI + math.log(_mills_diff(-d1, s))
        return math.log(ndtr(d1) - math.exp(k) * ndtr(d2))
    if -d2 < _ERFCX_SWITCH:
        return -0.5 * d1 * d1 - _LOG_SQRT_2PI + math.log(_mills_diff(d2, s))
    return math.log(math.exp(k) * ndtr(-d2) - ndtr(-d1))


def log_otm_price(setup: MarketSetup, K: float, sigma: float) -> tuple[float, Side]:
    """Log of the out-of-the-money price (call if K >= forward) and its side.

    Stays finite where the price itself underflows.  Returns -inf at sigma = 0.
    """
    _check(K, sigma)
    k = math.log(K / setup.forward)
    side: Side = "call" if k >= 0.0 else "put"
    s = sigma * math.sqrt(setup.maturity)
    if s == 0.0:
        return -math.inf, side
    return math.log(setup.spot) + _log_otm_normalized(k, s), side


def bs_call_price(setup: MarketSetup, K: float, sigma: float) -> float:
    """Black-Scholes call price."""
    _check(K, sigma)
    disc_strike = K * setup.discount
    log_p, side = log_otm_price(setup, K, sigma)
    otm = math.exp(log_p)
    if side == "call":
        return otm
    return otm + setup.spot - disc_strike


def bs_put_price(setup: MarketSetup, K: float, sigma: float) -> float:
    """Black-Scholes put price."""
    _check(K, sigma)
    disc_strike = K * setup.discount
    log_p, side = log_otm_price(setup, K, sigma)
    otm = math.exp(log_p)
    if side == "put":
        return otm
    return otm - setup.spot + disc_strike


def bs_price(setup: MarketSetup, K: float, sigma: float, side: Side = "call") -> float:
    return bs_call_price(setup, K, sigma) if side == "call" else bs_put_price(setup, K, sigma)


def log_bs_vega(setup: MarketSetup, K: float, sigma: float) -> float:
    _check(K, sigma)
    sqrt_t = math.sqrt(setup.maturity)
    s = sigma * sqrt_t
    if s == 0.0:
        return -math.inf
    d1 = math.log(setup.forward / K) / s + 0.5 * s
    return math.log(setup.spot * sqrt_t) - 0.5 * d1 * d1 - _LOG_SQRT_2PI


def bs_vega(setup: MarketSetup, K: float, sigma: float) -> float:
    """dC/dsigma; identical for calls and puts."""
    return math.exp(log_bs_vega(setup, K, sigma))


def _otm_log_target(setup: MarketSetup, quote: OptionQuote) -> tuple[float, Side]:
    """Translate a quote into the log OTM price, enforcing no-arbitrage bounds."""
    K, price = quote.strike, quote.price
    x0 = setup.spot
    disc_strike = K * setup.discount
    otm_side: Side = "call" if K >= setup.forward else "put"
    if quote.side == "call":
        if price >= x0:
            raise PriceOutOfBounds(f"call price {price} >= spot {x0}")
        otm = price if otm_side == "call" else price - x0 + disc_strike
    else:
        if price >= disc_strike:
            raise PriceOutOfBounds(f"put price {price} >= discounted strike {disc_strike}")
        otm = price if otm_side == "put" else price + x0 - disc_strike
    if not otm > 0.0:
        raise PriceOutOfBounds(f"{quote.side} price {price} at or below intrinsic value")
    return math.log(otm), otm_side


def implied_vol(
    setup: MarketSetup,
    quote: OptionQuote,
    *,
    sigma_min: float = SIGMA_MIN,
    sigma_max: float = SIGMA_MAX,
    max_iter: int = 200,
) -> float:
    """Black-Scholes implied volatility of a call or put quote.

    Raises
    ------
    PriceOutOfBounds
        Price at or beyond intrinsic value or the upper bound.
    NoConvergence
        Iteration budget exhausted.
    """
    log_target, otm_side = _otm_log_target(setup, quote)
    return _solve_log(setup, quote.strike, log_target, otm_side, sigma_min, sigma_max, max_iter)


def implied_vol_from_log_price(
    setup: MarketSetup,
    K: float,
    log_price: float,
    side: Side,
    *,
    sigma_min: float = SIGMA_MIN,
    sigma_max: float = SIGMA_MAX,
    max_iter: int = 200,
) -> float:
    """Implied vol from the log of an out-of-the-money price.

    Intended for wing quotes that underflow double precision.  ``side`` must
    be the OTM side for ``K`` (call above the forward, put below).
    """
    if not math.isfinite(log_price):
        raise PriceOutOfBounds("log price must be finite")
    k = math.log(K / setup.forward)
    otm_side: Side = "call" if k >= 0.0 else "put"
    if side != otm_side:
        raise ValueError(f"strike {K} is out of the money on the {otm_side} side")
    upper = math.log(setup.spot) + (0.0 if side == "call" else k)
    if log_price >= upper:
        raise PriceOutOfBounds("log price at or above the upper no-arbitrage bound")
    return _solve_log(setup, K, log_price, otm_side, sigma_min, sigma_max, max_iter)


def _solve_log(setup, K, log_target, otm_side, sigma_min, sigma_max, max_iter):
    """Safeguarded Newton on g(sigma) = log OTM price(sigma) - log target.

    g is strictly increasing; Newton steps leaving the bracket fall back to
    bisection.  The tolerance is relative on price, hence well inside the
    absolute 1e-12 * spot contract.
    """
    sqrt_t = math.sqrt(setup.maturity)
    k = math.log(K / setup.forward)
    log_x0 = math.log(setup.spot)

    def g(sig):
        return log_x0 + _log_otm_normalized(k, sig * sqrt_t) - log_target

    lo, hi = sigma_min, sigma_max
    g_lo = g(lo)
    while g_lo > 0.0:
        lo *= 1e-2
        if lo < 1e-300:
            raise NoConvergence("implied vol below representable range")
        g_lo = g(lo)
    g_hi = g(hi)
    while g_hi < 0.0:
        hi *= 2.0
        if hi > 1e8:
            raise NoConvergence("implied vol above 1e8")
        g_hi = g(hi)

    # initial guess from the wing expansion of the log price
    L = max(log_x0 - log_target, 1e-12)
    guess = math.sqrt(2.0) / sqrt_t * abs(k) / (math.sqrt(abs(k) + L) + math.sqrt(L))
    sig = guess if lo < guess < hi else 0.5 * (lo + hi)

    for _ in range(max_iter):
        gs = g(sig)
        if gs == 0.0:
            return sig
        if gs < 0.0:
            lo = sig
        else:
            hi = sig
        if abs(gs) < 1e-15:
            return sig
        # d log(price)/d sigma = vega / price
        log_deriv = log_bs_vega(setup, K, sig) - (log_target + gs)
        step = gs * math.exp(-log_deriv) if log_deriv > -700 else math.inf
        new = sig - step
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - sig) <= 1e-16 * sig or hi - lo <= 4e-16 * hi:
            return new
        sig = new
    raise NoConvergence(f"implied vol did not converge in {max_iter} iterations")
