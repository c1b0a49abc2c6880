"""Regular-variation diagnostics on sampled curves.

Samples live on geometric grids.  Everything is done on (log y, log f) so
that values far below the float range can be passed in log form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple, Optional

import numpy as np
from scipy.optimize import linprog

from .asymptotics import psi
from .curves import PricingCurve
from .errors import GridTooShort, InvalidIndex, NonPositiveSample

Kind = Literal["near-infinity", "near-zero"]

MIN_POINTS = 20
MIN_DECADES = 3.0


@dataclass(frozen=True)
class RvFit:
    """Least-squares index of a sampled function over the tail of its grid.

    ``residuals`` are log f - alpha log y - c on the tail window, i.e. samples
    of the log of the slowly varying factor.  ``local_slopes`` are finite
    difference slopes of log f against log y on the same window;
    ``converged`` is set when their spread is below ``tol``.
    """

    index: float
    residuals: np.ndarray
    converged: bool
    grid: np.ndarray
    local_slopes: np.ndarray
    tol: float


@dataclass(frozen=True)
class WingFit:
    """Tail estimate of a wing quantity with its convergence diagnostics.

    ``value`` is the tail mean over the last decade, ``extrapolated`` the
    intercept of a fit in 1/log K (removes the constant-prefactor drift).
    ``oscillation`` is the max-min over the last decade of
    tau log K - (a log K + b), the residual about a power law with constant
    prefactor; the raw spread of tau would hide a bounded oscillating
    prefactor behind its 1/log K damping.
    """

    value: float
    exists: bool
    oscillation: float
    extrapolated: float
    grid: np.ndarray
    samples: np.ndarray


@dataclass(frozen=True)
class ParetoTypeReport:
    """Quantile envelopes g1 <= f <= g2 fitted on log-log samples.

    ``lower`` and ``upper`` are the envelope log-slopes; ``intercepts`` their
    log-levels.  ``weak`` is set when both slopes are within ``tol`` of
    ``index``, so g2/g1 is at most sub-polynomial on the grid.
    """

    kind: Kind
    weak: bool
    index: float
    lower: float
    upper: float
    intercepts: tuple
    tol: float


class WingPrediction(NamedTuple):
    """sqrt(psi(m)/T) for the implied moment index m."""

    coefficient: float
    moment_index: float
    slope: float


def _prepare(y, f, log_values: bool):
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    if y.shape != f.shape or y.ndim != 1:
        raise ValueError("y and f must be 1-d arrays of equal length")
    if y.size < MIN_POINTS:
        raise GridTooShort(f"need at least {MIN_POINTS} points, got {y.size}")
    if np.any(y <= 0.0):
        raise NonPositiveSample("grid values must be positive")
    ly = np.log(y)
    if abs(ly.max() - ly.min()) / math.log(10.0) < MIN_DECADES:
        raise GridTooShort(f"grid must span at least {MIN_DECADES:g} decades")
    if log_values:
        lf = f
        if np.any(np.isnan(lf)) or np.any(lf == math.inf):
            raise NonPositiveSample("log samples must be finite or -inf")
    else:
        if np.any(~(f > 0.0)):
            raise NonPositiveSample("samples must be positive")
        lf = np.log(f)
    if np.any(~np.isfinite(lf)):
        raise NonPositiveSample("samples underflow; pass log values")
    return ly, lf


def _tail(ly: np.ndarray, kind: Kind, window: float) -> np.ndarray:
    """Indices of the fraction ``window`` of points nearest the limit point."""
    n = max(int(round(window * ly.size)), 4)
    order = np.argsort(ly)
    return order[-n:] if kind == "near-infinity" else order[:n]


def rv_index(
    y,
    f,
    *,
    kind: Kind = "near-infinity",
    window: float = 0.25,
    tol: float = 0.05,
    log_values: bool = False,
) -> RvFit:
    """Index of regular variation from samples (y, f(y)).

    alpha is the least-squares slope of log f against log y over the tail
    window.  The fit is flagged as converged when the local slopes on that
    window differ by less than ``tol``.

    Raises
    ------
    GridTooShort
        Fewer than 20 points or less than 3 decades.
    NonPositiveSample
        f <= 0 somewhere (or log f = -inf).
    """
    ly, lf = _prepare(y, f, log_values)
    idx = np.sort(_tail(ly, kind, window))
    x, z = ly[idx], lf[idx]
    alpha, c = np.polyfit(x, z, 1)
    local = np.diff(z) / np.diff(x)
    spread = float(local.max() - local.min())
    return RvFit(float(alpha), z - alpha * x - c, bool(spread < tol), np.exp(x), local, tol)


def _tau_fit(K: np.ndarray, tau: np.ndarray, tol: float) -> WingFit:
    lk = np.log(K)
    last = lk >= lk[-1] - math.log(10.0)
    # residual about tau = a + b / log K, scaled back by log K: this is the
    # wobble of the log price around a power law with constant prefactor
    a, b = np.polyfit(lk[last], tau[last] * lk[last], 1)
    resid = tau[last] * lk[last] - (a * lk[last] + b)
    osc = float(resid.max() - resid.min())
    value = float(tau[last].mean())
    tail = _tail(lk, "near-infinity", 0.5)
    extrap = float(np.polyfit(1.0 / lk[tail], tau[tail], 1)[1])
    return WingFit(value, bool(osc < tol), osc, extrap, K, tau)


def _check_grid(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.size < MIN_POINTS or math.log10(K.max() / K.min()) < MIN_DECADES:
        raise GridTooShort(f"need {MIN_POINTS} points spanning {MIN_DECADES:g} decades")
    if np.any(np.diff(K) <= 0.0):
        raise ValueError("grid must be increasing")
    return K


def limit_slope_right(curve: PricingCurve, grid, *, tol: float = 1e-2) -> WingFit:
    """tau(K) = log(1/C(K)) / log K on a grid above 1; estimates p~.

    ``exists`` is set when the oscillation over the last decade of the grid
    (see :class:`WingFit`) is below ``tol``.
    """
    curve.require("call")
    K = _check_grid(grid)
    if K[0] <= 1.0:
        raise ValueError("right-wing grid must lie above K = 1")
    lc = curve.log_prices(K)
    if np.any(~np.isfinite(lc)):
        raise NonPositiveSample("call prices must be positive on the grid")
    return _tau_fit(K, -lc / np.log(K), tol)


def limit_slope_left(curve: PricingCurve, grid, *, tol: float = 1e-2) -> WingFit:
    """Mirror: tau(K) = log(K / P(K)) / log(1/K) on a grid below 1; estimates q~.

    The returned ``grid`` holds 1/K so that the tail is at its end.
    """
    curve.require("put")
    K = _check_grid(grid)
    if K[-1] >= 1.0:
        raise ValueError("left-wing grid must lie below K = 1")
    lp = curve.log_prices(K)
    if np.any(~np.isfinite(lp)):
        raise NonPositiveSample("put prices must be positive on the grid")
    lk = np.log(K)
    tau = (lk - lp) / -lk
    order = np.argsort(-lk)
    return _tau_fit(1.0 / K[order], tau[order], tol)


def _quantile_line(x: np.ndarray, z: np.ndarray, q: float) -> tuple[float, float]:
    """Linear quantile regression z ~ a + b x at level q, solved as an LP."""
    n = x.size
    # variables: a, b, u+ (n), u- (n); min q sum u+ + (1-q) sum u-
    c = np.concatenate([[0.0, 0.0], np.full(n, q), np.full(n, 1.0 - q)])
    A = np.hstack([np.ones((n, 1)), x[:, None], np.eye(n), -np.eye(n)])
    bounds = [(None, None), (None, None)] + [(0.0, None)] * (2 * n)
    res = linprog(c, A_eq=A, b_eq=z, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"quantile regression failed: {res.message}")
    return float(res.x[0]), float(res.x[1])


def weak_pareto_check(
    y,
    f,
    alpha: float,
    kind: Kind = "near-infinity",
    *,
    window: float = 0.5,
    quantile: float = 0.05,
    tol: float = 0.05,
    log_values: bool = False,
) -> ParetoTypeReport:
    """Fit lower/upper quantile lines to log f - alpha log y on the tail.

    Envelope slopes are alpha plus the fitted slopes of the two lines.
    """
    ly, lf = _prepare(y, f, log_values)
    idx = _tail(ly, kind, window)
    x = ly[idx]
    z = lf[idx] - alpha * x
    # centre x so the intercepts are levels at the middle of the window
    xc = x - x.mean()
    a_lo, b_lo = _quantile_line(xc, z, quantile)
    a_hi, b_hi = _quantile_line(xc, z, 1.0 - quantile)
    lower, upper = alpha + min(b_lo, b_hi), alpha + max(b_lo, b_hi)
    weak = abs(lower - alpha) < tol and abs(upper - alpha) < tol
    return ParetoTypeReport(kind, bool(weak), float(alpha), float(lower), float(upper), (a_lo, a_hi), tol)


# index conventions: moment index as a function of the tail index
_MAPS = {
    ("near-infinity", "call"): lambda a: -a,  # C ~ K^{-p}
    ("near-infinity", "survival"): lambda a: -a - 1.0,  # F_bar ~ x^{-1-p}
    ("near-infinity", "density"): lambda a: -a - 2.0,  # D ~ x^{-2-p}
    ("near-zero", "put"): lambda a: a - 1.0,  # P ~ K^{1+q}
    ("near-zero", "cdf"): lambda a: a,  # F ~ x^{q}
    ("near-zero", "density"): lambda a: a + 1.0,  # D ~ x^{q-1}
}


def predict_wing_from_tail(
    tail_report: ParetoTypeReport,
    T: float,
    source: str = "density",
    *,
    convention: str = "moments",
) -> WingPrediction:
    """Map a tail index to the Lee coefficient sqrt(psi(m)/T).

    ``source`` names what was sampled: "call", "survival" or "density" near
    infinity; "put", "cdf" or "density" near zero.  Near zero the default
    convention reads the moment order off E[X^{-q}] < infinity, giving
    q~ = alpha + 1 for a density ~ x^alpha.  ``convention="stated"`` uses
    q~ = 1 - alpha instead (see the decisions ledger).

    Raises
    ------
    InvalidIndex
        The implied moment index is negative, or the report is not of weak
        Pareto type.
    """
    if not tail_report.weak:
        raise InvalidIndex("tail is not of weak Pareto type on this grid")
    if T <= 0.0:
        raise ValueError("T must be positive")
    key = (tail_report.kind, source)
    if key not in _MAPS:
        raise ValueError(f"unknown source {source!r} for {tail_report.kind}")
    a = tail_report.index
    if convention == "stated" and key == ("near-zero", "density"):
        m = 1.0 - a
    elif convention in ("moments", "stated"):
        m = _MAPS[key](a)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    if m < 0.0:
        raise InvalidIndex(f"implied moment index {m} is negative")
    s = psi(m) / T
    return WingPrediction(math.sqrt(s), m, s)


def lee_slope_samples(curve: PricingCurve, grid, side: str, iv) -> np.ndarray:
    """T I(K)^2 / |log(K/F)| for a vector of implied vols on ``grid``."""
    K = np.asarray(grid, dtype=float)
    lm = np.abs(np.log(K / curve.setup.forward))
    return curve.setup.maturity * np.asarray(iv) ** 2 / lm


def fit_lee_slope(K, slope_samples, *, tol: float = 1e-2, right: Optional[bool] = None) -> WingFit:
    """Tail fit of T I^2 / |log K| samples; the tail is at large K or small K."""
    K = np.asarray(K, dtype=float)
    s = np.asarray(slope_samples, dtype=float)
    if right is None:
        right = K[-1] > 1.0
    if not right:
        order = np.argsort(-np.log(K))
        K, s = 1.0 / K[order], s[order]
    return _tau_fit(K, s, tol)
