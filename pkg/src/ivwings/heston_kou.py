"""Heston stochastic variance with a compound Poisson jump term of double
exponential log-jump law.

    dX = mu X dt + sqrt(Y) X dW + X dJ,   dY = kappa (theta - Y) dt + volvol sqrt(Y) dZ

with corr(W, Z) = corr and log-jumps of density
p eta1 e^{-eta1 u} (u >= 0) + (1 - p) eta2 e^{eta2 u} (u < 0).  The drift
mu = r - lam * eta makes the discounted price a martingale.

Prices come from damped Fourier inversion of the characteristic function of
log(X_T / F).  Moment explosion of the variance part is detected by
integrating its Riccati equation at real moment orders.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import IntegrationWarning, quad, solve_ivp
from scipy.optimize import minimize_scalar

from .bs_core import MarketSetup, Side, implied_vol_from_log_price
from .curves import PricingCurve
from .errors import OutsideStrip, QuadratureFailure
from .regvar import WingFit, fit_lee_slope

BLOWUP = 1e12  # Riccati state magnitude treated as explosion
MOMENT_TOL = 1e-4  # bisection tolerance on the moment order
MOMENT_CAP = 1e6  # orders beyond this count as "no explosion"
_R_CAP = 500.0  # damping search range when no moment bound applies


@dataclass(frozen=True)
class HestonKouParams:
    """Model parameters.

    Attributes
    ----------
    spot, rate : float
        x0 > 0 and r >= 0.
    v0, kappa, theta, volvol : float
        Initial variance, mean-reversion speed, long-run level, vol of vol; all > 0.
    corr : float
        Correlation of the two Brownian motions, in [-1, 0].
    lam : float
        Jump intensity >= 0.
    p_up : float
        Probability of an upward jump, in (0, 1).
    eta1, eta2 : float
        Tail rates of the up and down log-jumps; eta1 > 1, eta2 > 0.
    """

    spot: float
    rate: float = 0.0
    v0: float = 0.04
    kappa: float = 1.5
    theta: float = 0.04
    volvol: float = 0.5
    corr: float = -0.5
    lam: float = 0.0
    p_up: float = 0.5
    eta1: float = 10.0
    eta2: float = 10.0

    def __post_init__(self):
        for name in ("spot", "v0", "kappa", "theta", "volvol", "eta2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive")
        if not (math.isfinite(self.rate) and self.rate >= 0.0):
            raise ValueError("rate must be nonnegative")
        if not -1.0 <= self.corr <= 0.0:
            raise ValueError("corr must lie in [-1, 0]")
        if not (math.isfinite(self.lam) and self.lam >= 0.0):
            raise ValueError("lam must be nonnegative")
        if not 0.0 < self.p_up < 1.0:
            raise ValueError("p_up must lie in (0, 1)")
        if not (math.isfinite(self.eta1) and self.eta1 > 1.0):
            raise ValueError("eta1 must exceed 1")

    @property
    def q_down(self) -> float:
        return 1.0 - self.p_up

    def setup(self, T: float) -> MarketSetup:
        return MarketSetup(self.spot, self.rate, T)


def kou_eta(params: HestonKouParams) -> float:
    """E[e^U] - 1 for the double exponential log-jump U, in closed form."""
    return params.p_up / (params.eta1 - 1.0) - params.q_down / (params.eta2 + 1.0)


def kou_eta_quadrature(params: HestonKouParams) -> float:
    """int e^u f(u) du - 1 by numerical quadrature; cross-check of :func:`kou_eta`."""
    p, q, e1, e2 = params.p_up, params.q_down, params.eta1, params.eta2
    up, _ = quad(lambda u: p * e1 * math.exp((1.0 - e1) * u), 0.0, math.inf, epsabs=0.0, epsrel=1e-13)
    down, _ = quad(lambda u: q * e2 * math.exp((1.0 + e2) * u), -math.inf, 0.0, epsabs=0.0, epsrel=1e-13)
    return up + down - 1.0


def martingale_drift(params: HestonKouParams) -> float:
    """mu = r - lam * eta."""
    return params.rate - params.lam * kou_eta(params)


# ---------------------------------------------------------------------------
# characteristic function


def _log1p_c(w: complex) -> complex:
    """Complex log(1 + w), accurate for small |w|."""
    if abs(w) < 1e-4:
        return w * (1.0 - w * (0.5 - w * (1.0 / 3.0 - 0.25 * w)))
    return complex(np.log(1.0 + w))


def _log_mgf_heston(params: HestonKouParams, T: float, z: complex) -> complex:
    """log E[exp(z (log X_T - log x0 - r T))] of the variance part, little-trap form.

    beta - d is rewritten as volvol^2 (z^2 - z) / (beta + d) so that the
    volvol -> 0 limit is free of cancellation.
    """
    k, th, xi, rho = params.kappa, params.theta, params.volvol, params.corr
    a = z * z - z
    beta = k - rho * xi * z
    d = np.sqrt(beta * beta - xi * xi * a)
    if (beta + d) == 0:
        d = -d
    bd = beta + d
    g = xi * xi * a / (bd * bd)
    e = np.exp(-d * T)
    one_m_e = -np.expm1(-d * T)
    D = a / bd * one_m_e / (1.0 - g * e)
    # log((1 - g e) / (1 - g)) = log1p(g (1 - e) / (1 - g))
    L = _log1p_c(g * one_m_e / (1.0 - g))
    C = k * th * (a * T / bd - 2.0 * L / (xi * xi))
    return complex(C + D * params.v0)


def _log_mgf_jumps(params: HestonKouParams, T: float, z: complex) -> complex:
    p, q, e1, e2 = params.p_up, params.q_down, params.eta1, params.eta2
    return params.lam * T * (p * e1 / (e1 - z) + q * e2 / (e2 + z) - 1.0 - z * kou_eta(params))


def _log_mgf_forward(params: HestonKouParams, T: float, z: complex) -> complex:
    """log E[(X_T / F)^z]; the jump compensator cancels the drift shift."""
    return _log_mgf_heston(params, T, z) + _log_mgf_jumps(params, T, z)


def log_cf(params: HestonKouParams, T: float, u: complex) -> complex:
    """log E[exp(i u log X_T)].

    Raises
    ------
    OutsideStrip
        -Im(u) outside the open moment strip (lo, hi) of :func:`moment_strip`.
    """
    u = complex(u)
    lo, hi = moment_strip(params, T)
    s = -u.imag
    if not lo < s < hi:
        raise OutsideStrip(f"moment order {s} outside ({lo}, {hi})")
    z = 1j * u
    F = params.spot * math.exp(params.rate * T)
    return z * math.log(F) + _log_mgf_forward(params, T, z)


def log_moment(params: HestonKouParams, T: float, s: float) -> float:
    """log E[X_T^s] for real s inside the strip."""
    return log_cf(params, T, -1j * s).real


# ---------------------------------------------------------------------------
# moment explosion


def _explodes(params: HestonKouParams, T: float, s: float) -> bool:
    """True when the variance Riccati ODE at real order s blows up before T.

    D' = volvol^2 D^2 / 2 + (corr volvol s - kappa) D + (s^2 - s) / 2, D(0) = 0.
    """
    xi, rho, k = params.volvol, params.corr, params.kappa
    a = 0.5 * (s * s - s)
    b = rho * xi * s - k
    c2 = 0.5 * xi * xi

    def rhs(t, y):
        return [c2 * y[0] * y[0] + b * y[0] + a]

    def blow(t, y):
        return abs(y[0]) - BLOWUP

    blow.terminal = True
    sol = solve_ivp(rhs, (0.0, T), [0.0], events=blow, rtol=1e-10, atol=1e-12, method="LSODA")
    return sol.status == 1 or not np.all(np.isfinite(sol.y))


def _critical_order(params: HestonKouParams, T: float, sign: float) -> float:
    """sup{m >= 0 : the variance part has a finite moment of order sign*m (+1 on the right)}.

    On the right the search starts at order 1, which never explodes.
    """
    base = 1.0 if sign > 0 else 0.0
    lo, step = 0.0, 1.0
    while _explodes(params, T, sign * (base + lo + step)) is False:
        lo += step
        step *= 2.0
        if base + lo > MOMENT_CAP:
            return math.inf
    hi = lo + step
    while hi - lo > MOMENT_TOL:
        mid = 0.5 * (lo + hi)
        if _explodes(params, T, sign * (base + mid)):
            hi = mid
        else:
            lo = mid
    return base + 0.5 * (lo + hi)


@lru_cache(maxsize=256)
def diffusion_moment_bounds(params: HestonKouParams, T: float) -> tuple[float, float]:
    """Critical moment orders (s_minus, s_plus) of the variance part alone.

    E[X^s] is finite for -s_minus < s < s_plus when lam = 0.
    """
    return _critical_order(params, T, -1.0), _critical_order(params, T, 1.0)


def moment_strip(params: HestonKouParams, T: float) -> tuple[float, float]:
    """Open interval of real s with E[X_T^s] finite."""
    s_minus, s_plus = diffusion_moment_bounds(params, T)
    if params.lam > 0.0:
        s_minus, s_plus = min(s_minus, params.eta2), min(s_plus, params.eta1)
    return -s_minus, s_plus


def critical_moment_right(params: HestonKouParams, T: float) -> float:
    """p~ = sup{p >= 0 : E[X_T^{1+p}] < infinity}; min(eta1 - 1, diffusion bound).

    Returns ``inf`` when neither jumps nor variance explosion bound it below
    order ``MOMENT_CAP``.
    """
    return moment_strip(params, T)[1] - 1.0


def critical_moment_left(params: HestonKouParams, T: float) -> float:
    """q~ = sup{q >= 0 : E[X_T^{-q}] < infinity}; min(eta2, diffusion bound)."""
    return -moment_strip(params, T)[0]


# ---------------------------------------------------------------------------
# Fourier pricing


class _Damped(NamedTuple):
    R: float
    log_scale: float


def _log_bound(params, T, k, R) -> float:
    """log of the damped integrand at v = 0, an upper bound on its modulus."""
    try:
        m = _log_mgf_forward(params, T, complex(R))
    except (ZeroDivisionError, OverflowError):
        return math.inf
    if not math.isfinite(m.real) or abs(m.imag) > 1e-6 * max(1.0, abs(m.real)):
        return math.inf
    return m.real - (R - 1.0) * k - math.log(abs(R * (R - 1.0)))


def _choose_damping(params, T, k, side: Side) -> _Damped:
    """Minimize the integrand bound over the admissible damping interval."""
    lo, hi = moment_strip(params, T)
    if side == "call":
        a, b = 1.0, min(hi, 1.0 + _R_CAP)
    else:
        a, b = max(lo, -_R_CAP), 0.0
    w = b - a
    eps = 1e-6 * w
    res = minimize_scalar(
        lambda R: _log_bound(params, T, k, R), bounds=(a + eps, b - eps), method="bounded", options={"xatol": 1e-8 * w}
    )
    if not math.isfinite(res.fun):
        raise OutsideStrip("no feasible damping parameter")
    return _Damped(float(res.x), float(res.fun))


def _cutoff(params, T, R, log_scale, k) -> float:
    """Frequency beyond which the normalized integrand is below 1e-17."""
    v = 1.0
    for _ in range(80):
        m = _log_mgf_forward(params, T, complex(R, v)).real - (R - 1.0) * k
        den = abs(complex(R - 1.0, v) * complex(R, v))
        if m - math.log(den) - log_scale < -39.0:
            return v
        v *= 1.5
    raise QuadratureFailure("characteristic function does not decay")


def log_price_cf(params: HestonKouParams, T: float, K: float, side: Side = "call") -> float:
    """log of the call or put price at strike K by damped Fourier inversion.

    With k = log(K/F) and damping R (call: 1 < R < s_plus, put: -s_minus < R < 0),

        V = e^{-rT} F e^{-(R-1)k} / pi int_0^inf Re[e^{-ivk} M(R + iv) / ((R-1+iv)(R+iv))] dv,

    M the moment generating function of log(X_T/F).  R is chosen per strike
    to minimize the integrand's modulus bound, which tracks the saddle point
    in the wings; the integral is then O(1) after normalization.

    Raises
    ------
    OutsideStrip
        No admissible damping (empty strip on the requested side).
    QuadratureFailure
        The Fourier integral did not converge or came out nonpositive.
    """
    if not (math.isfinite(K) and K > 0.0):
        raise ValueError("strike must be positive")
    if side not in ("call", "put"):
        raise ValueError("side must be 'call' or 'put'")
    F = params.spot * math.exp(params.rate * T)
    k = math.log(K / F)
    R, log_scale = _choose_damping(params, T, k, side)
    V = _cutoff(params, T, R, log_scale, k)

    def h(v: float) -> complex:
        z = complex(R, v)
        lm = _log_mgf_forward(params, T, z) - (R - 1.0) * k - log_scale
        return np.exp(lm) / ((z - 1.0) * z)

    opts = dict(a=0.0, b=V, epsabs=1e-15, epsrel=1e-12, limit=2000, wvar=k)
    with warnings.catch_warnings():
        # roundoff warnings are judged by the error estimates below
        warnings.simplefilter("ignore", IntegrationWarning)
        re, e1 = quad(lambda v: h(v).real, weight="cos", **opts)
        im, e2 = quad(lambda v: h(v).imag, weight="sin", **opts)
    val = (re + im) / math.pi
    if not val > 0.0:
        raise QuadratureFailure(f"Fourier integral {val} is not positive")
    if e1 + e2 > 1e-6 * math.pi * val:
        raise QuadratureFailure(f"Fourier integral error estimate {e1 + e2} too large")
    return -params.rate * T + math.log(F) + log_scale + math.log(val)


def price_call_cf(params: HestonKouParams, T: float, K: float) -> float:
    """Call price by Fourier inversion; see :func:`log_price_cf`."""
    return math.exp(log_price_cf(params, T, K, "call"))


def price_put_cf(params: HestonKouParams, T: float, K: float) -> float:
    return math.exp(log_price_cf(params, T, K, "put"))


def heston_kou_curve(params: HestonKouParams, T: float, side: Side = "call") -> PricingCurve:
    """Fourier prices as a :class:`PricingCurve` carrying the opposite side."""
    if side not in ("call", "put"):
        raise ValueError("side must be 'call' or 'put'")
    other: Side = "put" if side == "call" else "call"
    return PricingCurve(
        lambda K: log_price_cf(params, T, K, side),
        side,
        params.setup(T),
        name=f"heston-kou-{side}",
        log_price_other=lambda K: log_price_cf(params, T, K, other),
    )


# ---------------------------------------------------------------------------
# wing slopes


class MeasuredSlope(NamedTuple):
    """T I(K)^2 / |log(K/F)| on a wing grid.

    ``value`` is the sample at the outermost strike, ``fit`` the tail fit
    with its diagnostics.  ``vanishing`` is set when the samples extrapolate
    in 1/log K to (at most) a tenth of the outermost sample, the signature
    of a wing with all moments finite.
    """

    value: float
    fit: WingFit
    vanishing: bool


def wing_slope_measured(
    params: Optional[HestonKouParams],
    T: float,
    side: str,
    grid,
    *,
    curve: Optional[PricingCurve] = None,
    tol: float = 1e-2,
) -> MeasuredSlope:
    """Measure the Lee slope from OTM prices on ``grid``.

    ``side`` is "right" (calls, grid above F) or "left" (puts, grid below F).
    ``curve`` overrides the Fourier oracle, e.g. to inject flat-vol prices.
    """
    if side not in ("right", "left"):
        raise ValueError("side must be 'right' or 'left'")
    opt: Side = "call" if side == "right" else "put"
    if curve is None:
        if params is None:
            raise ValueError("need params or a curve")
        curve = heston_kou_curve(params, T, opt)
    curve.require(opt)
    setup = curve.setup
    K = np.asarray(grid, dtype=float)
    F = setup.forward
    if (side == "right" and np.any(K <= F)) or (side == "left" and np.any(K >= F)):
        raise ValueError(f"{side} wing grid must lie on the {opt} side of the forward")
    iv = np.array([implied_vol_from_log_price(setup, float(k), curve.log_price(float(k)), opt) for k in K])
    samples = setup.maturity * iv * iv / np.abs(np.log(K / F))
    fit = fit_lee_slope(K / F, samples, tol=tol, right=side == "right")
    outer = samples[np.argmax(np.abs(np.log(K / F)))]
    return MeasuredSlope(float(outer), fit, bool(fit.extrapolated < 0.1 * outer))
