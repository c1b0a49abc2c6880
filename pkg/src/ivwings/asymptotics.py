"""Wing formulas for implied volatility.

Contents: the moment map psi, Lee slopes, the sharp wing expansions with
and without the log-log correction, the leading term for models with all
moments finite, the Piterbarg functional with estimators of its decay
constants, admissibility diagnostics for weight functions, and a weight
function that violates the integral condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .curves import PricingCurve
from .errors import DomainError, GridTooShort

# ---------------------------------------------------------------------------
# psi and Lee slopes


def psi(u: float) -> float:
    """psi(u) = 2 - 4(sqrt(u^2 + u) - u), evaluated as 2 / (sqrt(1+u) + sqrt(u))^2.

    The rewritten form avoids the cancellation in sqrt(u^2+u) - u for large u.
    ``psi(inf)`` is 0.
    """
    u = float(u)
    if math.isnan(u) or u < 0.0:
        raise ValueError(f"psi needs u >= 0, got {u}")
    if math.isinf(u):
        return 0.0
    return 2.0 / (math.sqrt(1.0 + u) + math.sqrt(u)) ** 2


def lee_right_slope(p_tilde: float, T: float) -> float:
    """limsup of I(K)^2 / log K, i.e. psi(p~)/T."""
    if T <= 0.0:
        raise ValueError("T must be positive")
    return psi(p_tilde) / T


def lee_left_slope(q_tilde: float, T: float) -> float:
    """limsup of I(K)^2 / log(1/K), i.e. psi(q~)/T."""
    return lee_right_slope(q_tilde, T)


# ---------------------------------------------------------------------------
# sharp expansions


@dataclass(frozen=True)
class WingExpansion:
    """Leading-order implied volatility and the size of its error term.

    ``dominant`` names the error term that controls ``error_scale``.
    """

    main_term: float
    correction_included: bool
    error_scale: float
    dominant: str = "zeta"

    def __post_init__(self):
        if not self.main_term >= 0.0:
            raise ValueError("main_term must be nonnegative")
        if not self.error_scale >= 0.0:
            raise ValueError("error_scale must be nonnegative")


def _resolve_log(value, log_value, name):
    if log_value is not None:
        return float(log_value)
    if value is None:
        raise ValueError(f"give either {name} or its logarithm")
    if not value > 0.0:
        raise DomainError(f"{name} must be positive")
    return math.log(value)


def _log_strike(K, log_k):
    if log_k is not None:
        return float(log_k)
    if not (K is not None and K > 0.0):
        raise DomainError("strike must be positive")
    return math.log(K)


def _sharp(ell: float, L: float, T: float, with_loglog: bool, zeta: Optional[float]) -> WingExpansion:
    if T <= 0.0:
        raise ValueError("T must be positive")
    if not L > 0.0:
        raise DomainError(f"log(1/C~) = {L} must be positive")
    if with_loglog:
        if not L > 1.0:
            raise DomainError(f"log(1/C~) = {L} <= 1: log log term undefined or negative")
        a = L - 0.5 * math.log(L)
    else:
        a = L
    # sqrt(ell + a) - sqrt(a) without cancellation
    main = math.sqrt(2.0 / T) * ell / (math.sqrt(ell + a) + math.sqrt(a))
    z = math.log(max(L, math.e)) if zeta is None else float(zeta)
    return WingExpansion(main, with_loglog, abs(z) / math.sqrt(L), "zeta")


def sharp_iv_right(
    K: float,
    c_tilde: Optional[float] = None,
    T: float = 1.0,
    with_loglog: bool = True,
    *,
    log_c_tilde: Optional[float] = None,
    zeta: Optional[float] = None,
    log_k: Optional[float] = None,
) -> WingExpansion:
    """Sharp right-wing expansion from an approximation C~(K) of the call price.

    main = sqrt(2/T) [sqrt(log K + L - 1/2 log L) - sqrt(L - 1/2 log L)],
    L = log(1/C~(K)); without the correction the log L terms are dropped.

    Parameters
    ----------
    K : float
        Strike, > 1 (prices normalized by spot).
    c_tilde, log_c_tilde : float
        C~(K) or its logarithm; the log form serves underflowed prices.
    zeta : float, optional
        Value of the slowly growing function in the error term, default
        log L.
    log_k : float, optional
        log K, overriding ``K``; for strikes beyond the float range.
    """
    lk = _log_strike(K, log_k)
    if not lk > 0.0:
        raise DomainError("right-wing expansion needs K > 1")
    lc = _resolve_log(c_tilde, log_c_tilde, "c_tilde")
    if lc >= 0.0:
        raise DomainError("C~(K) must be below 1")
    return _sharp(lk, -lc, T, with_loglog, zeta)


def sharp_iv_left(
    K: float,
    p_tilde_val: Optional[float] = None,
    T: float = 1.0,
    with_loglog: bool = True,
    *,
    log_p_tilde: Optional[float] = None,
    zeta: Optional[float] = None,
    log_k: Optional[float] = None,
) -> WingExpansion:
    """Mirror of :func:`sharp_iv_right` for K -> 0 with L = log(K / P~(K))."""
    lk = _log_strike(K, log_k)
    if not lk < 0.0:
        raise DomainError("left-wing expansion needs 0 < K < 1")
    lp = _resolve_log(p_tilde_val, log_p_tilde, "p_tilde_val")
    L = lk - lp
    if not L > 0.0:
        raise DomainError("P~(K) must be below K")
    return _sharp(-lk, L, T, with_loglog, zeta)


def _infinite_moment(ell: float, L: float, T: float, zeta: Optional[float]) -> WingExpansion:
    if T <= 0.0:
        raise ValueError("T must be positive")
    if not L > 0.0:
        raise DomainError("approximating price must be below its upper bound")
    main = ell / (math.sqrt(2.0 * T) * math.sqrt(L))
    power = ell * ell / L**1.5
    z = math.log(max(L, math.e)) if zeta is None else float(zeta)
    slow = abs(z) / math.sqrt(L)
    if power >= slow:
        return WingExpansion(main, False, power, "power")
    return WingExpansion(main, False, slow, "zeta")


def iv_infinite_moment_right(
    K: float,
    c_tilde: Optional[float] = None,
    T: float = 1.0,
    *,
    log_c_tilde: Optional[float] = None,
    zeta: Optional[float] = None,
    log_k: Optional[float] = None,
) -> WingExpansion:
    """Leading term log K / (sqrt(2T) sqrt(log 1/C~)) for models with all moments finite.

    ``error_scale`` is the larger of (log K)^2 / L^{3/2} and zeta / sqrt(L);
    ``dominant`` is "power" or "zeta" accordingly.  The first wins while
    C~ decays no faster than exp(-a (log K)^2).
    """
    lk = _log_strike(K, log_k)
    if not lk > 0.0:
        raise DomainError("right-wing expansion needs K > 1")
    lc = _resolve_log(c_tilde, log_c_tilde, "c_tilde")
    if lc >= 0.0:
        raise DomainError("C~(K) must be below 1")
    return _infinite_moment(lk, -lc, T, zeta)


def iv_infinite_moment_left(
    K: float,
    p_tilde_val: Optional[float] = None,
    T: float = 1.0,
    *,
    log_p_tilde: Optional[float] = None,
    zeta: Optional[float] = None,
    log_k: Optional[float] = None,
) -> WingExpansion:
    """Mirror of :func:`iv_infinite_moment_right` with L = log(K / P~(K))."""
    lk = _log_strike(K, log_k)
    if not lk < 0.0:
        raise DomainError("left-wing expansion needs 0 < K < 1")
    lp = _resolve_log(p_tilde_val, log_p_tilde, "p_tilde_val")
    L = lk - lp
    if not L > 0.0:
        raise DomainError("P~(K) must be below K")
    return _infinite_moment(-lk, L, T, zeta)


# ---------------------------------------------------------------------------
# weight functions


class WProfile(NamedTuple):
    """w, log w' and log of the integral of e^w from the floor, at given points."""

    w: np.ndarray
    log_dw: np.ndarray
    log_integral: np.ndarray


@dataclass(frozen=True)
class WFunction:
    """Positive increasing weight w on (floor, inf).

    ``value`` and ``derivative`` must accept numpy arrays.
    """

    value: Callable[[np.ndarray], np.ndarray]
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    floor: float = 1.0
    name: str = "w"

    def __call__(self, y):
        return self.value(np.asarray(y, dtype=float))

    def log_derivative(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.derivative is not None:
            with np.errstate(divide="ignore"):
                return np.log(self.derivative(y))
        # central difference in log y
        h = 1e-6
        d = (self.value(y * math.exp(h)) - self.value(y * math.exp(-h))) / (2.0 * h * y)
        with np.errstate(divide="ignore"):
            return np.log(np.maximum(d, 0.0))

    def profile(self, points: Sequence[float], *, substeps: int = 64) -> WProfile:
        """Evaluate w, log w' and log int_floor^x e^{w(u)} du at sorted points.

        The integral treats w as linear between sub-nodes spaced
        geometrically, so each piece is integrated exactly; pieces are
        accumulated with log-sum-exp.
        """
        x = np.asarray(points, dtype=float)
        if np.any(np.diff(x) <= 0.0) or x[0] <= self.floor:
            raise ValueError("points must be increasing and above the floor")
        nodes = [np.array([self.floor])]
        prev = self.floor
        for xi in x:
            if prev > 0.0:
                seg = np.geomspace(prev, xi, substeps + 1)[1:]
            else:
                seg = np.linspace(prev, xi, substeps + 1)[1:]
            nodes.append(seg)
            prev = xi
        u = np.concatenate(nodes)
        wu = self(u)
        du = np.diff(u)
        dw = np.diff(wu)
        # log of (b-a)(e^{w_b}-e^{w_a})/(w_b-w_a), stable for tiny dw
        wmax = np.maximum(wu[1:], wu[:-1])
        small = np.abs(dw) < 1e-8
        with np.errstate(divide="ignore", invalid="ignore"):
            adw = np.abs(dw)
            big_part = wmax + np.log(-np.expm1(-adw)) - np.log(adw)
        piece = np.where(small, 0.5 * (wu[1:] + wu[:-1]), big_part) + np.log(du)
        cum = np.logaddexp.accumulate(piece)
        idx = np.arange(1, len(x) + 1) * substeps - 1
        return WProfile(self(x), self.log_derivative(x), cum[idx])


def w_power(a: float, scale: float = 1.0) -> WFunction:
    """w(y) = scale * y^a."""
    if a <= 0.0 or scale <= 0.0:
        raise ValueError("need a > 0 and scale > 0")
    return WFunction(
        lambda y: scale * np.power(y, a),
        lambda y: scale * a * np.power(y, a - 1.0),
        floor=0.0 if a >= 1.0 else 1.0,
        name=f"{scale:g}*y^{a:g}",
    )


def w_log_power(b: float, scale: float = 1.0) -> WFunction:
    """w(y) = scale * (log y)^b on y > 1."""
    if b <= 0.0 or scale <= 0.0:
        raise ValueError("need b > 0 and scale > 0")
    return WFunction(
        lambda y: scale * np.power(np.log(y), b),
        lambda y: scale * b * np.power(np.log(y), b - 1.0) / y,
        floor=1.0,
        name=f"{scale:g}*(log y)^{b:g}",
    )


def check_w_growth(w: WFunction, grid, *, threshold: float = 10.0) -> bool:
    """True iff w(y)/log y increases beyond the grid midpoint and ends above ``threshold``."""
    y = np.asarray(grid, dtype=float)
    y = y[y > max(w.floor, 1.0)]
    if y.size < 4:
        raise GridTooShort("need at least 4 grid points above max(floor, 1)")
    ratio = w(y) / np.log(y)
    tail = ratio[y.size // 2 :]
    return bool(np.all(np.diff(tail) > 0.0) and tail[-1] > threshold)


@dataclass(frozen=True)
class AdmissibilityReport:
    """Which of the three weight-function conditions hold on the grid tail.

    The thresholds are the grid indices after the last violation; a flag is
    set when its threshold lies in the first half of the grid.
    """

    integral_condition: bool
    derivative_upper: bool
    derivative_lower: bool
    thresholds: dict = field(default_factory=dict)
    epsilon: float = 0.5


def _tail_ok(ok: np.ndarray) -> tuple[bool, int]:
    bad = np.nonzero(~ok)[0]
    start = int(bad[-1]) + 1 if bad.size else 0
    return start <= ok.size // 2 and start < ok.size, start


def check_w_admissible(w, eps: float, grid) -> AdmissibilityReport:
    """Check int e^w >= e^{(1-eps)w}, w' <= e^{eps w} and w' >= e^{-eps w} on the grid.

    ``w`` may be a :class:`WFunction` or anything with a ``profile`` method
    (such as :class:`PathologicalW`).  All comparisons are made in logs.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    prof = w.profile(grid)
    ok_int = prof.log_integral >= (1.0 - eps) * prof.w
    ok_up = prof.log_dw <= eps * prof.w
    ok_lo = prof.log_dw >= -eps * prof.w
    res = [_tail_ok(ok) for ok in (ok_int, ok_up, ok_lo)]
    return AdmissibilityReport(
        res[0][0],
        res[1][0],
        res[2][0],
        {"integral_condition": res[0][1], "derivative_upper": res[1][1], "derivative_lower": res[2][1]},
        eps,
    )


# ---------------------------------------------------------------------------
# weight function violating the integral condition


def _log_expm1(x: float) -> float:
    """log(e^x - 1) for x > 0."""
    return x + math.log(-math.expm1(-x)) if x > 1.0 else math.log(math.expm1(x))


class RampPoint(NamedTuple):
    """The point x = n + 1 - s * delta_n, with delta_n far below float resolution."""

    n: int
    s: float


class PathologicalW:
    """Piecewise-linear w with plateaus a_n on [n, n+1-delta_n] and ramps up to a_{n+1}.

    a_0 = 1, a_1 = 3 a_0 + 4 log 2, a_{n+1} = 3 a_n + 4 log(2n) for n >= 1,
    delta_n = exp(-a_{n+1}).  Only log delta_n is stored.  Points inside
    the ramps are addressed with :class:`RampPoint`.
    """

    name = "pathological"
    floor = 0.0

    def __init__(self, n_max: int):
        if n_max < 2:
            raise ValueError("n_max must be at least 2")
        a = [1.0, 3.0 + 4.0 * math.log(2.0)]
        for n in range(1, n_max + 1):
            a.append(3.0 * a[n] + 4.0 * math.log(2.0 * n))
        self.n_max = n_max
        self.a = np.array(a)  # a_0 .. a_{n_max+1}
        self.log_delta = -self.a[1:]  # log delta_n, n = 0 .. n_max
        self._build_prefix()

    def identity_residuals(self) -> np.ndarray:
        """(a_n + a_{n+1})/4 - (a_n + log 2n) for n = 1..n_max; zero up to rounding."""
        n = np.arange(1, self.n_max + 1)
        return (self.a[n] + self.a[n + 1]) / 4.0 - (self.a[n] + np.log(2.0 * n))

    def _build_prefix(self):
        # log of int_0^k e^w for k = 0..n_max+1
        a, ld = self.a, self.log_delta
        terms = []
        prefix = [-math.inf]
        for k in range(self.n_max + 1):
            d = a[k + 1] - a[k]
            terms.append(a[k] + math.log1p(-math.exp(ld[k])))
            terms.append(math.log(-math.expm1(-d)) - math.log(d))
            prefix.append(float(logsumexp(terms)))
        self._prefix = prefix

    def _one(self, pt):
        if isinstance(pt, RampPoint):
            n, s = pt.n, float(pt.s)
            if not (0 <= n <= self.n_max and 0.0 <= s <= 1.0):
                raise ValueError("ramp point out of range")
        else:
            x = float(pt)
            n = int(math.floor(x))
            if not 0 <= n <= self.n_max:
                raise ValueError("point beyond the constructed levels")
            frac = x - n
            if 1.0 - frac > math.exp(self.log_delta[n]):
                # plateau
                a_n = self.a[n]
                log_int = float(np.logaddexp(self._prefix[n], a_n + math.log(frac))) if frac > 0 else self._prefix[n]
                return a_n, -math.inf, log_int
            s = (1.0 - frac) / math.exp(self.log_delta[n])
        a_n, a_n1, ld = self.a[n], self.a[n + 1], self.log_delta[n]
        d = a_n1 - a_n
        t = 1.0 - s  # fraction of the ramp covered
        w = a_n + d * t
        log_dw = math.log(d) - ld
        parts = [self._prefix[n], a_n + math.log1p(-math.exp(ld))]
        if t > 0.0:
            parts.append(a_n + ld - math.log(d) + _log_expm1(d * t))
        return w, log_dw, float(logsumexp(parts))

    def __call__(self, y):
        return np.array([self._one(float(v))[0] for v in np.atleast_1d(y)])

    def profile(self, points) -> WProfile:
        vals = [self._one(p) for p in points]
        w, ldw, li = (np.array(c, dtype=float) for c in zip(*vals))
        return WProfile(w, ldw, li)

    def a_points(self, n_min: int = 1) -> list[RampPoint]:
        """x = n+1 - delta_n/2, the left ends of the set A."""
        return [RampPoint(n, 0.5) for n in range(n_min, self.n_max + 1)]

    def counterexample_table(self, n_min: int = 2) -> list[tuple[int, float, float]]:
        """Rows (n, log int_0^x e^w, w(x)/2) at x = n+1 - delta_n/2."""
        prof = self.profile(self.a_points(n_min))
        return [(n, li, 0.5 * wv) for n, li, wv in zip(range(n_min, self.n_max + 1), prof.log_integral, prof.w)]


def pathological_w(n_max: int) -> PathologicalW:
    """Weight function for which int_0^x e^w <= e^{w(x)/2} on a set of points tending to infinity."""
    return PathologicalW(n_max)


# ---------------------------------------------------------------------------
# Piterbarg functional and constants


def piterbarg_lambda(K: float, iv: float, w: Union[WFunction, Callable]) -> float:
    """Lambda(K) = I(K) sqrt(w(K)) / log K."""
    if not K > 1.0:
        raise DomainError("Lambda needs K > 1")
    if iv < 0.0:
        raise ValueError("iv must be nonnegative")
    wk = float(np.asarray(w(np.array([K])))[0])
    return iv * math.sqrt(wk) / math.log(K)


def piterbarg_gamma_predicted(p_hat_w: float, T: float) -> float:
    """1 / sqrt(2 T p^_w); zero for p^_w = inf."""
    if not p_hat_w > 0.0:
        raise ValueError("p_hat_w must be positive")
    if T <= 0.0:
        raise ValueError("T must be positive")
    if math.isinf(p_hat_w):
        return 0.0
    return 1.0 / math.sqrt(2.0 * T * p_hat_w)


@dataclass(frozen=True)
class PiterbargConstants:
    """Estimates of l_w, r*_w, p^_w (and p~_w when a density is available).

    ``window`` holds the strikes used for the tail estimates; ``trend`` is
    the least-squares slope of log(1/C)/w against log K over that window
    (near zero when the ratio has settled).
    """

    l_w: float
    r_star_w: float
    p_hat_w: float
    p_tilde_w: Optional[float]
    grid: np.ndarray
    window: np.ndarray
    trend: float
    converged: bool

    def spread(self) -> float:
        """Largest relative disagreement among l_w, r*_w and p^_w."""
        v = np.array([self.l_w, self.r_star_w, self.p_hat_w])
        return float((v.max() - v.min()) / v.mean())


def _log_piece_integrals(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """log int over [x_i, x_{i+1}] of e^{g}, g linear in x on each piece."""
    dx = np.diff(x)
    dg = np.diff(g)
    gmax = np.maximum(g[1:], g[:-1])
    adg = np.abs(dg)
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = gmax + np.log(-np.expm1(-adg)) - np.log(adg)
    mid = 0.5 * (g[1:] + g[:-1])
    return np.where(adg < 1e-10, mid, exact) + np.log(dx)


def _divergence_statistic(K: np.ndarray, log_f: np.ndarray, wK: np.ndarray, p: float) -> float:
    """log(int over last decade / int over previous decade) of f e^{p w} du."""
    g = log_f + p * wK
    top = K[-1]
    last = K >= top / 10.0
    prev = (K >= top / 100.0) & (K <= top / 10.0 * (1 + 1e-12))
    return float(logsumexp(_log_piece_integrals(K[last], g[last])) - logsumexp(_log_piece_integrals(K[prev], g[prev])))


def _bisect_rate(K, log_f, wK, hint: float, threshold: float) -> float:
    """sup of p with convergent truncated integral, by bisection on the decade ratio."""
    diverges = lambda p: _divergence_statistic(K, log_f, wK, p) > math.log(threshold)
    lo, hi = 0.0, max(2.0 * hint, 1.0)
    if diverges(lo):
        return 0.0
    while not diverges(hi):
        hi *= 2.0
        if hi > 1e12:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if diverges(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


def estimate_piterbarg_constants(
    curve: PricingCurve,
    w: WFunction,
    grid,
    *,
    window: float = 0.25,
    threshold: float = 1.0,
    check_growth: bool = True,
) -> PiterbargConstants:
    """Estimate l_w, r*_w and p^_w from a call curve on a geometric strike grid.

    l_w is the minimum of log(1/C)/w over the last ``window`` fraction of the
    grid, r*_w the least-squares slope of log(1/C) against w there.  p^_w
    is found by bisection on p: the integral of F_bar e^{p w} over the last
    decade of the grid is compared with the one over the previous decade,
    and a ratio above ``threshold`` counts as divergence.  F_bar = -dC/dK is
    taken from finite differences of log C.

    Raises
    ------
    GridTooShort
        Fewer than 3 decades or 40 points.
    """
    curve.require("call")
    K = np.asarray(grid, dtype=float)
    if K.size < 40 or math.log10(K[-1] / K[0]) < 3.0:
        raise GridTooShort("need at least 40 points spanning 3 decades")
    if check_growth and not check_w_growth(w, K):
        raise DomainError(f"weight {w.name} fails the growth condition on this grid")
    lk = np.log(K)
    logC = curve.log_prices(K)
    wK = w(K)
    L = -logC
    start = int(math.floor((1.0 - window) * K.size))
    sel = slice(start, None)
    ratio = L / wK
    l_w = float(np.min(ratio[sel]))
    r_star = float(np.polyfit(wK[sel], L[sel], 1)[0])
    trend = float(np.polyfit(lk[sel], ratio[sel], 1)[0])

    # F_bar = e^{rT} * (-dC/dK) = e^{rT} C (-dlogC/dlogK) / K
    slope = np.gradient(logC, lk)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_fbar = logC + np.log(-slope) - lk + curve.setup.rate * curve.setup.maturity
    good = np.isfinite(log_fbar)
    p_hat = _bisect_rate(K[good], log_fbar[good], wK[good], l_w, threshold)

    p_tilde = None
    if curve.log_density is not None:
        log_d = np.array([curve.log_density(float(k)) for k in K])
        p_tilde = _bisect_rate(K, log_d, wK, l_w, threshold)

    converged = bool(abs(trend) * (lk[-1] - lk[start]) < 0.05 * max(l_w, 1e-300))
    return PiterbargConstants(l_w, r_star, p_hat, p_tilde, K, K[sel], trend, converged)
