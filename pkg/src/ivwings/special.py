"""Modified Bessel function of the first kind and regularized incomplete gamma.

Both are written out rather than taken from scipy.special so that log
variants are available where the plain values underflow (tiny Bessel
arguments with large order, gamma tails like e^{-3200}).  scipy serves as
the reference in the tests.
"""

from __future__ import annotations

import math

from .errors import UnsupportedOrder

_SERIES_MAX_X = 30.0
_LOG_2PI = math.log(2.0 * math.pi)


def _log_ive_series(alpha: float, x: float) -> float:
    # I_a(x) = sum_k (x/2)^{2k+a} / (k! Gamma(k+a+1)), all terms positive
    lh = math.log(0.5 * x)
    terms = []
    k = 0
    best = -math.inf
    while True:
        t = (2 * k + alpha) * lh - math.lgamma(k + 1.0) - math.lgamma(k + alpha + 1.0)
        terms.append(t)
        if t > best:
            best = t
        elif t < best - 40.0:
            break
        k += 1
    return best + math.log(math.fsum(math.exp(t - best) for t in terms)) - x


def _log_ive_hankel(alpha: float, x: float) -> float:
    # e^{-x} I_a(x) ~ (2 pi x)^{-1/2} sum_k (-1)^k a_k / x^k, stop at the smallest term
    mu = 4.0 * alpha * alpha
    total = 1.0
    term = 1.0
    prev = math.inf
    for k in range(1, 200):
        term *= -(mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        if abs(term) >= prev or term == 0.0:
            break
        total += term
        prev = abs(term)
        if prev < 1e-17 * abs(total):
            break
    return math.log(total) - 0.5 * (_LOG_2PI + math.log(x))


def log_bessel_i_scaled(alpha: float, x: float) -> float:
    """log(e^{-x} I_alpha(x)) for alpha > -1, x >= 0.

    Power series (summed in log space) for x <= 30 or x <= 2 alpha^2,
    the large-argument expansion otherwise.
    """
    if not alpha > -1.0:
        raise UnsupportedOrder(f"order {alpha} <= -1 not supported")
    if not x >= 0.0:
        raise ValueError("argument must be nonnegative")
    if x == 0.0:
        if alpha == 0.0:
            return 0.0
        return -math.inf if alpha > 0.0 else math.inf
    if math.isinf(x):
        return -math.inf
    if x <= _SERIES_MAX_X or x <= 2.0 * alpha * alpha:
        return _log_ive_series(alpha, x)
    return _log_ive_hankel(alpha, x)


def log_bessel_i_scaled_logarg(alpha: float, log_x: float) -> float:
    """log(e^{-x} I_alpha(x)) from log x; usable when x itself underflows."""
    if log_x > -300.0:
        return log_bessel_i_scaled(alpha, math.exp(log_x))
    if not alpha > -1.0:
        raise UnsupportedOrder(f"order {alpha} <= -1 not supported")
    # leading series term; the next one is smaller by x^2 / (4(alpha+1))
    return alpha * (log_x - math.log(2.0)) - math.lgamma(alpha + 1.0)


def bessel_i_scaled(alpha: float, x: float) -> float:
    """e^{-x} I_alpha(x)."""
    return math.exp(log_bessel_i_scaled(alpha, x))


# ---------------------------------------------------------------------------
# incomplete gamma


def _log_prefix(a: float, y: float) -> float:
    return a * math.log(y) - y - math.lgamma(a)


def _lower_series(a: float, y: float) -> float:
    """log P(a, y) by the series y^a e^{-y} / Gamma(a+1) * sum y^n / ((a+1)...(a+n))."""
    term = 1.0
    total = 1.0
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= y / ap
        total += term
        if term < 1e-17 * total:
            break
    return _log_prefix(a, y) - math.log(a) + math.log(total)


def _upper_cf(a: float, y: float) -> float:
    """log Q(a, y) by the Legendre continued fraction (modified Lentz)."""
    tiny = 1e-300
    b = y + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return _log_prefix(a, y) + math.log(h)


def _check_gamma(a: float, y: float) -> None:
    if not a > 0.0:
        raise ValueError("shape must be positive")
    if math.isnan(y) or y < 0.0:
        raise ValueError("argument must be nonnegative")


def log_reg_lower_gamma(a: float, y: float) -> float:
    """log P(a, y)."""
    _check_gamma(a, y)
    if y == 0.0:
        return -math.inf
    if math.isinf(y):
        return 0.0
    if y < a + 1.0:
        return _lower_series(a, y)
    return math.log(-math.expm1(_upper_cf(a, y)))


def log_reg_upper_gamma(a: float, y: float) -> float:
    """log Q(a, y) = log(1 - P(a, y)), accurate deep in the tail."""
    _check_gamma(a, y)
    if y == 0.0:
        return 0.0
    if math.isinf(y):
        return -math.inf
    if y < a + 1.0:
        return math.log1p(-math.exp(_lower_series(a, y)))
    return _upper_cf(a, y)


def reg_lower_gamma(a: float, y: float) -> float:
    """Regularized lower incomplete gamma P(a, y) = gamma(a, y) / Gamma(a)."""
    return math.exp(log_reg_lower_gamma(a, y))


def reg_upper_gamma(a: float, y: float) -> float:
    """Q(a, y) = 1 - P(a, y)."""
    return math.exp(log_reg_upper_gamma(a, y))
