"""Put-call symmetry: strike reflection, the transformed call G and moment duality.

With F = x0 e^{rT} the forward, eta(K) = F^2 / K and
G(K) = (K / F) P(eta(K)) is a call pricing function whose implied vol at
eta(K) equals the source implied vol at K.  Moments of the stock under the
transformed measure satisfy m_p = F^{2p-1} m_{1-p} of the original.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .bs_core import MarketSetup
from .curves import PricingCurve
from .errors import DivergentMoment, QuadratureFailure
from .quadrature import log_quad_line


def eta_T(setup: MarketSetup, K):
    """Strike reflection F^2 / K about the forward; an involution."""
    F = setup.forward
    K = np.asarray(K, dtype=float) if not np.isscalar(K) else float(K)
    if np.any(np.asarray(K) <= 0.0):
        raise ValueError("strike must be positive")
    return F * (F / K)


@dataclass(frozen=True)
class SymmetricCurve:
    """G(K) = (K/F) P(eta(K)) built from a put curve."""

    source: PricingCurve
    setup: MarketSetup

    def log_price(self, K: float) -> float:
        F = self.setup.forward
        return math.log(K) - math.log(F) + self.source.log_price(float(eta_T(self.setup, K)))

    def price(self, K: float) -> float:
        return math.exp(self.log_price(K))

    def log_put_price(self, K: float) -> float:
        """Put of G, (K/F) C(eta(K)), from the source's call when it carries one."""
        if self.source.log_price_other is None:
            return self.induced_put().log_price(K)
        F = self.setup.forward
        return math.log(K) - math.log(F) + self.source.log_price_other(float(eta_T(self.setup, K)))

    def as_curve(self) -> PricingCurve:
        """G as a call :class:`PricingCurve` on the same slice."""
        other = self.log_put_price if self.source.log_price_other is not None else None
        return PricingCurve(self.log_price, "call", self.setup, name=f"G[{self.source.name}]", log_price_other=other)

    def induced_put(self) -> PricingCurve:
        """Put of G by parity: G - x0 + K e^{-rT}.  Loses digits deep in the wings."""
        s = self.setup

        def lp(K: float) -> float:
            return math.log(self.price(K) - s.spot + K * s.discount)

        return PricingCurve(lp, "put", s, name=f"Gput[{self.source.name}]")

    def is_decreasing_beyond_forward(self, grid) -> bool:
        K = np.asarray(grid, dtype=float)
        K = K[K > self.setup.forward]
        lp = np.array([self.log_price(float(k)) for k in K])
        return bool(np.all(np.isfinite(lp)) and np.all(np.diff(lp) < 0.0))


def symmetric_call(curve: PricingCurve, setup: MarketSetup | None = None) -> SymmetricCurve:
    """Transform a put curve into the symmetric call G.

    Raises
    ------
    WrongSide
        ``curve`` is not a put curve.
    """
    curve.require("put")
    return SymmetricCurve(curve, setup if setup is not None else curve.setup)


def iv_symmetry_check(
    iv_c: Callable[[float], float],
    iv_g: Callable[[float], float],
    setup: MarketSetup,
    grid,
) -> float:
    """max over the grid of |I_C(K) - I_G(eta(K))|."""
    K = np.atleast_1d(np.asarray(grid, dtype=float))
    dev = [abs(iv_c(float(k)) - iv_g(float(eta_T(setup, k)))) for k in K]
    return float(max(dev))


# ---------------------------------------------------------------------------
# moment duality


@dataclass(frozen=True)
class DensityOracle:
    """Terminal law of X_T: log density of the continuous part and the atom at 0.

    ``width`` is a rough log-scale spread of the bulk; it sets the first
    quadrature step.  ``log_moment``, when given, maps q to the log of
    int y^q D(y) dy by the model's own method.
    """

    log_density: Callable[[float], float]
    setup: MarketSetup
    log_atom: float = -math.inf
    width: float = 0.2
    name: str = "oracle"
    log_moment: Optional[Callable[[float], float]] = None


class DualityResult(NamedTuple):
    lhs: float
    rhs: float
    gap: float


def lognormal_oracle(setup: MarketSetup, sigma: float) -> DensityOracle:
    """Black-Scholes terminal law."""
    s = sigma * math.sqrt(setup.maturity)
    mu = math.log(setup.forward) - 0.5 * s * s

    def ld(x: float) -> float:
        z = (math.log(x) - mu) / s
        return -0.5 * z * z - math.log(x * s) - 0.5 * math.log(2.0 * math.pi)

    return DensityOracle(ld, setup, width=s, name=f"lognormal({sigma})")


def _log_line(logf, center, width):
    try:
        return log_quad_line(logf, center, h0=0.1 * width)
    except QuadratureFailure as exc:
        raise DivergentMoment(str(exc)) from exc
    except OverflowError as exc:
        # tail scan left the float range without the integrand decaying
        raise DivergentMoment("moment integrand does not decay") from exc


def moment_dual_check(oracle: DensityOracle, p: float, setup: MarketSetup | None = None) -> DualityResult:
    """Compare m_p of the transformed law with F^{2p-1} m_{1-p} of the original.

    lhs integrates x^p F^3 / x^3 D(F^2 / x) over x in log variables.  rhs
    uses the oracle's ``log_moment`` when present, else integrates
    y^{1-p} D(y).  Only the continuous part enters: the transformed measure
    puts no weight on the image of the atom at zero.

    Raises
    ------
    DivergentMoment
        1 - p < 0 while the law has an atom at zero, or a quadrature fails
        to find a decaying tail.
    """
    if p == 0.0:
        raise ValueError("duality is stated for p != 0")
    setup = setup if setup is not None else oracle.setup
    if 1.0 - p < 0.0 and oracle.log_atom > -math.inf:
        raise DivergentMoment(f"moment of order {1.0 - p} < 0 is infinite with an atom at zero")
    F = setup.forward
    lF = math.log(F)
    D = oracle.log_density

    def lhs_integrand(u: float) -> float:
        # x = e^u, dx = x du
        return (p - 2.0) * u + 3.0 * lF + D(math.exp(2.0 * lF - u))

    def rhs_integrand(v: float) -> float:
        return (2.0 - p) * v + D(math.exp(v))

    log_lhs = _log_line(lhs_integrand, lF, oracle.width)
    if oracle.log_moment is not None:
        log_m = oracle.log_moment(1.0 - p)
    else:
        log_m = _log_line(rhs_integrand, lF, oracle.width)
    log_rhs = (2.0 * p - 1.0) * lF + log_m
    if not (math.isfinite(log_lhs) and math.isfinite(log_rhs)):
        raise DivergentMoment("moment integral is infinite")
    lhs, rhs = math.exp(log_lhs), math.exp(log_rhs)
    return DualityResult(lhs, rhs, abs(math.expm1(log_lhs - log_rhs)))
