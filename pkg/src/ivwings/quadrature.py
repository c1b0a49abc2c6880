"""Log-space quadrature for integrands that over- or underflow.

The integrand is supplied as its logarithm.  A forward scan with growing
steps locates the bulk and the truncation point, then QUADPACK (via
scipy.integrate.quad) integrates the integrand rescaled by its maximum
using the scan nodes as breakpoints.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable, Sequence

from scipy.integrate import IntegrationWarning, quad

from .errors import QuadratureFailure

DROP = 60.0  # truncate once the integrand is e^-60 below its peak


class _PeakMissed(Exception):
    pass


def log_quad_halfline(
    logf: Callable[[float], float],
    h0: float,
    *,
    anchors: Sequence[float] = (),
    growth: float = 1.5,
    drop: float = DROP,
    max_nodes: int = 400,
    epsrel: float = 1e-13,
) -> float:
    """log of int_0^inf exp(logf(t)) dt.

    ``h0`` is the first scan step; it should resolve the integrand near 0.
    ``anchors`` are extra breakpoints where narrow bulk mass may sit; the
    scan always runs past the largest one.  It stops once logf has fallen
    ``drop`` below its running maximum and is decreasing.

    Raises
    ------
    QuadratureFailure
        No finite integrand value found, the scan never terminated, or
        QUADPACK reported non-convergence with a large error estimate.
    """
    anchors = sorted(a for a in anchors if a > 0.0 and math.isfinite(a))
    must_pass = anchors[-1] if anchors else 0.0
    nodes = []
    t = 0.0
    h = h0
    peak = -math.inf
    last = -math.inf
    for _ in range(max_nodes):
        t += h
        v = logf(t)
        nodes.append(t)
        peak = max(peak, v)
        if t > must_pass and math.isfinite(peak) and v < peak - drop and v <= last:
            break
        last = v
        h *= growth
    else:
        raise QuadratureFailure("integrand did not decay within the scan budget")
    b = nodes[-1]
    for a in anchors:
        if a < b:
            peak = max(peak, logf(a))
    if not math.isfinite(peak):
        raise QuadratureFailure("integrand is zero on the scanned range")
    pts = sorted(set(nodes[:-1]) | {a for a in anchors if a < b})

    for _ in range(4):
        try:
            return peak + math.log(_rescaled_quad(logf, peak, b, pts, epsrel))
        except _PeakMissed as exc:
            peak = exc.args[0]
    raise QuadratureFailure("could not locate the integrand peak")


def _rescaled_quad(logf, peak, b, pts, epsrel):
    def g(x):
        lv = logf(x)
        if lv > peak + 30.0:
            raise _PeakMissed(lv)
        return math.exp(lv - peak) if lv > -math.inf else 0.0

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, err = quad(g, 0.0, b, points=pts, epsabs=0.0, epsrel=epsrel, limit=max(100, 4 * len(pts)))
        except IntegrationWarning:
            warnings.simplefilter("ignore", IntegrationWarning)
            val, err = quad(g, 0.0, b, points=pts, epsabs=0.0, epsrel=1e-10, limit=max(200, 8 * len(pts)))
            if not (val > 0.0 and err <= 1e-6 * val):
                raise QuadratureFailure(f"quadrature error estimate {err} too large for value {val}")
    if not val > 0.0:
        raise QuadratureFailure("quadrature returned a nonpositive value")
    return val


def log_quad_line(logf: Callable[[float], float], center: float, h0: float = 0.05, **kw) -> float:
    """log of int_R exp(logf(u)) du, split at ``center`` into two half-lines."""
    right = log_quad_halfline(lambda t: logf(center + t), h0, **kw)
    left = log_quad_halfline(lambda t: logf(center - t), h0, **kw)
    hi, lo = max(right, left), min(right, left)
    return hi + math.log1p(math.exp(lo - hi))
