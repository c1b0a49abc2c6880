"""Strike-to-price mappings shared by the estimators.

A curve is carried by its log price so that deep-wing values far below the
double-precision underflow threshold remain usable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bs_core import MarketSetup, OptionQuote, Side, implied_vol, implied_vol_from_log_price, log_otm_price
from .errors import NonPositiveSample, WrongSide


@dataclass(frozen=True)
class PricingCurve:
    """Call or put prices as a function of strike.

    Attributes
    ----------
    log_price : callable
        Strike -> log of the option price.
    side : {"call", "put"}
    setup : MarketSetup
        Slice the prices refer to.
    log_density : callable, optional
        Strike -> log density of the terminal stock price, when the source
        model provides one.
    log_price_other : callable, optional
        Strike -> log price of the opposite side.  Used for implied vols of
        in-the-money strikes, where parity would cancel digits.
    """

    log_price: Callable[[float], float]
    side: Side
    setup: MarketSetup
    log_density: Optional[Callable[[float], float]] = None
    name: str = field(default="curve", compare=False)
    log_price_other: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.side not in ("call", "put"):
            raise ValueError(f"side must be 'call' or 'put', got {self.side!r}")

    def price(self, K: float) -> float:
        return math.exp(self.log_price(K))

    def log_prices(self, strikes) -> np.ndarray:
        return np.array([self.log_price(float(K)) for K in np.asarray(strikes, dtype=float)])

    def prices(self, strikes) -> np.ndarray:
        return np.exp(self.log_prices(strikes))

    def implied_vol(self, K: float) -> float:
        """Black-Scholes implied vol at K.

        Out-of-the-money quotes go through the log price (no underflow);
        in-the-money ones through parity on the linear scale.
        """
        otm: Side = "call" if K >= self.setup.forward else "put"
        if otm == self.side:
            return implied_vol_from_log_price(self.setup, K, self.log_price(K), otm)
        if self.log_price_other is not None:
            return implied_vol_from_log_price(self.setup, K, self.log_price_other(K), otm)
        return implied_vol(self.setup, OptionQuote(K, math.exp(self.log_price(K)), self.side))

    def require(self, side: Side) -> "PricingCurve":
        if self.side != side:
            raise WrongSide(f"expected a {side} curve, got {self.side}")
        return self


def geometric_grid(k_min: float, k_max: float, n: int) -> np.ndarray:
    """n strikes equally spaced in log between k_min and k_max."""
    if not (0.0 < k_min < k_max):
        raise ValueError("need 0 < k_min < k_max")
    if n < 2:
        raise ValueError("need at least two grid points")
    return np.exp(np.linspace(math.log(k_min), math.log(k_max), n))


def curve_from_samples(strikes, prices, side: Side, setup: MarketSetup, *, log_prices=False) -> PricingCurve:
    """Curve interpolating samples linearly in (log K, log price).

    Strikes outside the sampled range are extrapolated with the end slopes.
    """
    K = np.asarray(strikes, dtype=float)
    y = np.asarray(prices, dtype=float)
    if K.shape != y.shape or K.ndim != 1 or K.size < 2:
        raise ValueError("strikes and prices must be 1-d arrays of equal length >= 2")
    order = np.argsort(K)
    K, y = K[order], y[order]
    if not log_prices:
        if np.any(y <= 0.0):
            raise NonPositiveSample("prices must be positive")
        y = np.log(y)
    lk = np.log(K)

    def lp(strike: float) -> float:
        x = math.log(strike)
        if x <= lk[0]:
            s = (y[1] - y[0]) / (lk[1] - lk[0])
            return float(y[0] + s * (x - lk[0]))
        if x >= lk[-1]:
            s = (y[-1] - y[-2]) / (lk[-1] - lk[-2])
            return float(y[-1] + s * (x - lk[-1]))
        return float(np.interp(x, lk, y))

    return PricingCurve(lp, side, setup, name="samples")


def _bs_log_price(setup: MarketSetup, sigma: float, side: Side) -> Callable[[float], float]:
    def lp(K: float) -> float:
        log_otm, otm = log_otm_price(setup, K, sigma)
        if otm == side:
            return log_otm
        # in the money: add intrinsic via parity
        intrinsic = setup.spot - K * setup.discount
        if side == "put":
            intrinsic = -intrinsic
        return math.log(math.exp(log_otm) + intrinsic)

    return lp


def bs_curve(setup: MarketSetup, sigma: float, side: Side = "call") -> PricingCurve:
    """Black-Scholes prices at constant volatility, evaluated in log space."""
    other: Side = "put" if side == "call" else "call"
    return PricingCurve(
        _bs_log_price(setup, sigma, side),
        side,
        setup,
        name=f"blackscholes(sigma={sigma})",
        log_price_other=_bs_log_price(setup, sigma, other),
    )
