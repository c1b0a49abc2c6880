"""Implied-volatility wing asymptotics with exact CEV and Heston+Kou pricing oracles."""

from .asymptotics import (
    WFunction,
    WingExpansion,
    estimate_piterbarg_constants,
    iv_infinite_moment_left,
    iv_infinite_moment_right,
    lee_left_slope,
    lee_right_slope,
    pathological_w,
    psi,
    sharp_iv_left,
    sharp_iv_right,
    w_log_power,
    w_power,
)
from .bs_core import MarketSetup, OptionQuote, bs_call_price, bs_put_price, implied_vol, implied_vol_from_log_price
from .cev import CevParams, cev_call, cev_curve, cev_put
from .curves import PricingCurve, bs_curve, geometric_grid
from .errors import *  # noqa: F401,F403
from .heston_kou import (
    HestonKouParams,
    critical_moment_left,
    critical_moment_right,
    heston_kou_curve,
    kou_eta,
    log_cf,
    martingale_drift,
    price_call_cf,
    wing_slope_measured,
)
from .regvar import limit_slope_left, limit_slope_right, predict_wing_from_tail, rv_index, weak_pareto_check
from .symmetry import eta_T, iv_symmetry_check, moment_dual_check, symmetric_call

__version__ = "0.1.0"
