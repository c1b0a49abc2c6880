"""Batch experiment harness.

    ivwings smile|wings|piterbarg|symmetry [--config PATH] [flags]

Configuration is a flat ``key = value`` file; command-line flags override
file entries.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

from .asymptotics import (
    check_w_admissible,
    estimate_piterbarg_constants,
    pathological_w,
    piterbarg_gamma_predicted,
    piterbarg_lambda,
    psi,
    w_log_power,
    w_power,
)
from .bs_core import MarketSetup, OptionQuote, implied_vol, implied_vol_from_log_price
from .cev import CevParams, cev_curve, cev_log_put, cev_oracle
from .curves import PricingCurve, bs_curve, geometric_grid
from .errors import ConfigError, DomainError, GridTooShort, IvWingsError
from .heston_kou import (
    HestonKouParams,
    critical_moment_left,
    critical_moment_right,
    heston_kou_curve,
    wing_slope_measured,
)
from .symmetry import eta_T, iv_symmetry_check, lognormal_oracle, moment_dual_check, symmetric_call

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
MODELS = ("blackscholes", "cev", "heston_kou", "external-csv")
SMILE_COLUMNS = ("strike", "price", "side", "implied_vol", "log_strike", "flag")
EXTERNAL_HEADER = ["strike", "price", "side"]
TINY = sys.float_info.min  # prices below the normal range count as unrepresentable


def fmt(x: float) -> str:
    return "%.17g" % x


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.split(",") if t.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run depends on.  Field names double as config-file keys."""

    model: str = "blackscholes"
    spot: float = 100.0
    rate: float = 0.0
    maturity: float = 1.0
    kmin: float = 50.0
    kmax: float = 200.0
    n: int = 41
    out: Optional[str] = None
    plot_dir: Optional[str] = None
    seed: int = 0  # reserved; no computation is random
    workers: int = 1
    input: Optional[str] = None
    # model parameters
    sigma: float = 0.2
    rho: float = 0.5
    v0: float = 0.04
    kappa: float = 1.5
    theta: float = 0.04
    volvol: float = 0.5
    corr: float = -0.5
    lam: float = 0.0
    p_up: float = 0.5
    eta1: float = 10.0
    eta2: float = 10.0
    # wings
    wing_depth: float = 8.0
    wing_points: int = 20
    # piterbarg
    w: str = "power"
    w_exponent: Optional[float] = None
    w_scale: float = 1.0
    eps: float = 0.5
    n_max: int = 10
    # symmetry
    p_list: tuple = (0.3, 0.5, 0.7, 1.0)

    def setup(self) -> MarketSetup:
        return MarketSetup(self.spot, self.rate, self.maturity)

    def grid(self) -> np.ndarray:
        return geometric_grid(self.kmin, self.kmax, self.n)

    def cev(self) -> CevParams:
        return CevParams(self.spot, self.sigma, self.rho)

    def heston_kou(self) -> HestonKouParams:
        return HestonKouParams(
            self.spot,
            self.rate,
            v0=self.v0,
            kappa=self.kappa,
            theta=self.theta,
            volvol=self.volvol,
            corr=self.corr,
            lam=self.lam,
            p_up=self.p_up,
            eta1=self.eta1,
            eta2=self.eta2,
        )


_PARSERS: dict[str, Callable[[str], object]] = {
    f.name: {"float": float, "int": int, "str": str, "tuple": _floats}.get(
        str(f.type).replace("Optional[", "").rstrip("]"), str
    )
    for f in fields(ExperimentConfig)
}
# aliases used on the command line and in files
_ALIASES = {"lambda": "lam", "p-up": "p_up"}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Raises
    ------
    ConfigError
        Malformed line, unknown or duplicate key, or a value of the wrong type.
    """
    out: dict = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key.replace("-", "_"))
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{no}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{no}: duplicate key {key!r}")
        try:
            out[key] = _PARSERS[key](value)
        except ValueError:
            raise ConfigError(f"{source}:{no}: bad value {value!r} for {key!r}") from None
    return out


def build_config(file_values: dict, overrides: dict) -> ExperimentConfig:
    """Merge file values with flag overrides (flags win) and validate."""
    values = dict(file_values)
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Raise ConfigError naming the offending field."""
    if cfg.model not in MODELS:
        raise ConfigError(f"model: expected one of {', '.join(MODELS)}, got {cfg.model!r}")
    if not 0.0 < cfg.kmin < cfg.kmax:
        raise ConfigError(f"kmin/kmax: need 0 < kmin < kmax, got {cfg.kmin}, {cfg.kmax}")
    if cfg.n < 10:
        raise ConfigError(f"n: need at least 10 strikes, got {cfg.n}")
    if cfg.workers < 1:
        raise ConfigError("workers: must be at least 1")
    if cfg.wing_depth <= 1.0 or cfg.wing_points < 20:
        raise ConfigError("wing_depth must exceed 1 and wing_points be at least 20")
    try:
        cfg.setup()
        if cfg.model == "blackscholes" and not cfg.sigma > 0.0:
            raise ValueError("sigma must be positive")
        if cfg.model == "cev":
            cfg.cev()
            if cfg.rate != 0.0:
                raise ValueError("the CEV oracle is implemented for zero rate")
        if cfg.model == "heston_kou":
            cfg.heston_kou()
    except ValueError as exc:
        raise ConfigError(f"{cfg.model} parameters: {exc}") from None
    if cfg.model == "external-csv" and not cfg.input:
        raise ConfigError("input: external-csv needs an input path")


def model_curve(cfg: ExperimentConfig, side: str) -> PricingCurve:
    if cfg.model == "blackscholes":
        return bs_curve(cfg.setup(), cfg.sigma, side)
    if cfg.model == "cev":
        return cev_curve(cfg.cev(), cfg.maturity, side)
    if cfg.model == "heston_kou":
        return heston_kou_curve(cfg.heston_kou(), cfg.maturity, side)
    raise ConfigError(f"model {cfg.model!r} has no pricing curve")


# ---------------------------------------------------------------------------
# output helpers


def _write_csv(path: Optional[str], header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    wr.writerows(rows)
    text = buf.getvalue()
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def _write_plot(cfg: ExperimentConfig, name: str, x, y) -> None:
    """Two-column whitespace-delimited data file for external plotting."""
    if not cfg.plot_dir:
        return
    os.makedirs(cfg.plot_dir, exist_ok=True)
    with open(os.path.join(cfg.plot_dir, name), "w") as fh:
        for a, b in zip(x, y):
            fh.write(f"{fmt(a)} {fmt(b)}\n")


# ---------------------------------------------------------------------------
# smile


def _smile_point(cfg: ExperimentConfig, K: float) -> tuple:
    setup = cfg.setup()
    side = "call" if K >= setup.forward else "put"
    lp = model_curve(cfg, side).log_price(K)
    price = math.exp(lp) if lp > -745.0 else 0.0
    if price < TINY:
        return (K, price, side, None, "unrepresentable")
    try:
        return (K, price, side, implied_vol_from_log_price(setup, K, lp, side), "")
    except IvWingsError as exc:
        return (K, price, side, None, type(exc).__name__)


def _external_rows(cfg: ExperimentConfig) -> list[tuple]:
    setup = cfg.setup()
    try:
        fh = open(cfg.input, newline="")
    except OSError as exc:
        raise ConfigError(f"input: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != EXTERNAL_HEADER:
            raise ConfigError(f"{cfg.input}:1: header must be {','.join(EXTERNAL_HEADER)}")
        rows = []
        for no, rec in enumerate(reader, start=2):
            if not rec or not "".join(rec).strip():
                continue
            if len(rec) != 3:
                raise ConfigError(f"{cfg.input}:{no}: expected 3 fields")
            try:
                q = OptionQuote(float(rec[0]), float(rec[1]), rec[2].strip())
            except ValueError as exc:
                raise ConfigError(f"{cfg.input}:{no}: {exc}") from None
            fwd = setup.spot - q.strike * setup.discount
            lo, hi = (max(fwd, 0.0), setup.spot) if q.side == "call" else (max(-fwd, 0.0), q.strike * setup.discount)
            if not lo < q.price < hi:
                raise ConfigError(f"{cfg.input}:{no}: price {q.price} outside no-arbitrage bounds ({lo}, {hi})")
            rows.append(q)
    out = []
    for q in rows:
        try:
            out.append((q.strike, q.price, q.side, implied_vol(setup, q), ""))
        except IvWingsError as exc:
            out.append((q.strike, q.price, q.side, None, type(exc).__name__))
    return out


def cmd_smile(cfg: ExperimentConfig) -> str:
    """Price the grid (or read quotes) and write the smile CSV; returns its text."""
    if cfg.model == "external-csv":
        rows = _external_rows(cfg)
    else:
        strikes = [float(k) for k in cfg.grid()]
        work = partial(_smile_point, cfg)
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                rows = list(pool.map(work, strikes, chunksize=max(1, len(strikes) // (4 * cfg.workers))))
        else:
            rows = [work(k) for k in strikes]
    body = [
        (fmt(K), fmt(price), side, "" if iv is None else fmt(iv), fmt(math.log(K)), flag)
        for K, price, side, iv, flag in rows
    ]
    text = _write_csv(cfg.out, SMILE_COLUMNS, body)
    ok = [(math.log(r[0]), r[3]) for r in rows if r[3] is not None]
    _write_plot(cfg, "smile.dat", [a for a, _ in ok], [b for _, b in ok])
    return text


# ---------------------------------------------------------------------------
# wings


@dataclass
class WingRow:
    wing: str
    measured: float
    extrapolated: float
    predicted: float
    oscillation: float
    vanishing: bool
    note: str = ""
    grid: np.ndarray = field(default=None, repr=False)
    samples: np.ndarray = field(default=None, repr=False)

    @property
    def gap(self) -> float:
        return abs(self.measured - self.predicted)


def _wing_grids(cfg: ExperimentConfig):
    F = cfg.setup().forward
    k = np.linspace(1.0, cfg.wing_depth, cfg.wing_points)
    return F * np.exp(k), F * np.exp(-k[::-1])


def _wing_row(name, curve, side, grid, predicted, note="") -> WingRow:
    m = wing_slope_measured(None, curve.setup.maturity, side, grid, curve=curve)
    return WingRow(name, m.value, m.fit.extrapolated, predicted, m.fit.oscillation, m.vanishing, note, m.fit.grid, m.fit.samples)


def wing_rows(cfg: ExperimentConfig) -> list[WingRow]:
    right, left = _wing_grids(cfg)
    call, put = model_curve(cfg, "call"), model_curve(cfg, "put")
    T = cfg.maturity
    if cfg.model == "blackscholes":
        return [
            _wing_row("right", call, "right", right, 0.0, "all moments finite"),
            _wing_row("left", put, "left", left, 0.0, "all moments finite"),
        ]
    if cfg.model == "cev":
        p = cfg.cev()
        cont = PricingCurve(lambda K: cev_log_put(p, T, K, include_atom=False), "put", p.setup(T), name="cev-put-continuous")
        q = 2.0 * (1.0 - p.rho)
        return [
            _wing_row("right", call, "right", right, 0.0, "all moments finite"),
            _wing_row("left", put, "left", left, psi(0.0), "atom at zero: q~ = 0"),
            _wing_row("left-continuous", cont, "left", left, psi(q), f"continuous part: q~ = {fmt(q)}"),
        ]
    hk = cfg.heston_kou()
    pt, qt = critical_moment_right(hk, T), critical_moment_left(hk, T)
    return [
        _wing_row("right", call, "right", right, psi(pt) if math.isfinite(pt) else 0.0, f"p~ = {fmt(pt)}"),
        _wing_row("left", put, "left", left, psi(qt) if math.isfinite(qt) else 0.0, f"q~ = {fmt(qt)}"),
    ]


def cmd_wings(cfg: ExperimentConfig) -> str:
    """Measured vs predicted Lee slopes T I^2 / |log(K/F)| for both wings."""
    if cfg.model == "external-csv":
        raise ConfigError("model: wings needs a pricing model, not external-csv")
    rows = wing_rows(cfg)
    header = ("wing", "measured", "extrapolated", "predicted", "gap", "oscillation", "vanishing", "note")
    body = [
        (r.wing, fmt(r.measured), fmt(r.extrapolated), fmt(r.predicted), fmt(r.gap), fmt(r.oscillation), str(r.vanishing).lower(), r.note)
        for r in rows
    ]
    _write_csv(cfg.out, header, body)
    for r in rows:
        _write_plot(cfg, f"wing_{r.wing}.dat", np.log(r.grid), r.samples)
    lines = [f"{'wing':<16}{'measured':>14}{'extrap.':>14}{'predicted':>14}{'gap':>12}  note"]
    for r in rows:
        flag = " [slope -> 0]" if r.vanishing else ""
        lines.append(f"{r.wing:<16}{r.measured:14.6g}{r.extrapolated:14.6g}{r.predicted:14.6g}{r.gap:12.3g}  {r.note}{flag}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# piterbarg


def _weight(cfg: ExperimentConfig):
    if cfg.w == "power":
        a = cfg.w_exponent if cfg.w_exponent is not None else (2.0 * (1.0 - cfg.rho) if cfg.model == "cev" else 1.0)
        return w_power(a, cfg.w_scale)
    if cfg.w == "log-power":
        return w_log_power(cfg.w_exponent if cfg.w_exponent is not None else 2.0, cfg.w_scale)
    if cfg.w == "pathological":
        return pathological_w(cfg.n_max)
    raise ConfigError(f"w: expected power, log-power or pathological, got {cfg.w!r}")


def cmd_piterbarg(cfg: ExperimentConfig) -> str:
    """Estimate l_w, r*_w, p^_w on the strike grid and the predicted Lambda limit."""
    if cfg.model == "external-csv":
        raise ConfigError("model: piterbarg needs a pricing model, not external-csv")
    try:
        w = _weight(cfg)
    except ValueError as exc:
        raise ConfigError(f"w: {exc}") from None
    lines = [f"weight: {w.name}"]
    if cfg.w == "pathological":
        rep = check_w_admissible(w, cfg.eps, w.a_points(1))
        lines.append(f"admissibility (eps={fmt(cfg.eps)}): integral_condition={rep.integral_condition} "
                     f"derivative_upper={rep.derivative_upper} derivative_lower={rep.derivative_lower}")
        rows = [(str(n), fmt(li), fmt(half)) for n, li, half in w.counterexample_table(2)]
        _write_csv(cfg.out, ("n", "log_integral", "half_w"), rows)
        lines.append("refusing to estimate constants: weight is not admissible")
        return "\n".join(lines) + "\n"
    grid = cfg.grid()
    curve = model_curve(cfg, "call")
    try:
        est = estimate_piterbarg_constants(curve, w, grid)
    except (DomainError, GridTooShort) as exc:
        raise ConfigError(f"piterbarg: {exc}") from None
    rep = check_w_admissible(w, cfg.eps, grid)
    gamma = piterbarg_gamma_predicted(est.p_hat_w, cfg.maturity)
    iv = [curve.implied_vol(float(k)) for k in grid]
    lam = [piterbarg_lambda(float(k), v, w) for k, v in zip(grid, iv)]
    _write_csv(cfg.out, ("strike", "implied_vol", "lambda"), [(fmt(k), fmt(v), fmt(l)) for k, v, l in zip(grid, iv, lam)])
    _write_plot(cfg, "lambda.dat", np.log(grid), lam)
    lines += [
        f"l_w        {est.l_w:.10g}",
        f"r*_w       {est.r_star_w:.10g}",
        f"p^_w       {est.p_hat_w:.10g}",
        f"gamma_w    {gamma:.10g}  (predicted Lambda limit)",
        f"Lambda     {lam[-1]:.10g}  (at K = {grid[-1]:.6g})",
        f"converged  {est.converged}",
        f"admissibility (eps={fmt(cfg.eps)}): integral_condition={rep.integral_condition} "
        f"derivative_upper={rep.derivative_upper} derivative_lower={rep.derivative_lower}",
    ]
    if cfg.model == "cev":
        lines.append(f"sigma(1-rho) {cfg.sigma * (1.0 - cfg.rho):.10g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# symmetry


def cmd_symmetry(cfg: ExperimentConfig) -> str:
    """Implied-vol symmetry deviation on the grid and moment-duality gaps."""
    if cfg.model == "cev":
        oracle = cev_oracle(cfg.cev(), cfg.maturity)
    elif cfg.model == "blackscholes":
        oracle = lognormal_oracle(cfg.setup(), cfg.sigma)
    else:
        raise ConfigError("model: symmetry needs a model density (cev or blackscholes)")
    setup = cfg.setup()
    call = model_curve(cfg, "call")
    G = symmetric_call(model_curve(cfg, "put")).as_curve()
    grid = cfg.grid()
    devs = [iv_symmetry_check(call.implied_vol, G.implied_vol, setup, [k]) for k in grid]
    rows = [("iv_symmetry", "", "", "", fmt(max(devs)))]
    lines = [f"iv symmetry: max |I_C(K) - I_G(eta(K))| = {max(devs):.3e} over {len(grid)} strikes"]
    for p in cfg.p_list:
        r = moment_dual_check(oracle, p, setup)
        rows.append(("moment_duality", fmt(p), fmt(r.lhs), fmt(r.rhs), fmt(r.gap)))
        lines.append(f"duality p={p:g}: lhs={r.lhs:.12g} rhs={r.rhs:.12g} gap={r.gap:.3e}")
    _write_csv(cfg.out, ("check", "p", "lhs", "rhs", "gap"), rows)
    _write_plot(cfg, "iv_symmetry.dat", [float(eta_T(setup, k)) for k in grid], devs)
    return "\n".join(lines) + "\n"


COMMANDS = {"smile": cmd_smile, "wings": cmd_wings, "piterbarg": cmd_piterbarg, "symmetry": cmd_symmetry}


# ---------------------------------------------------------------------------
# argument parsing


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="flat key = value file")
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--out", metavar="PATH", help="CSV output path")
    p.add_argument("--plot-dir", dest="plot_dir", metavar="DIR", help="write two-column plot data here")
    p.add_argument("--input", metavar="PATH", help="quotes CSV for external-csv")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int, help="reserved")
    for name in ("kmin", "kmax", "maturity", "spot", "rate"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--n", type=int, help="number of strikes")
    g = p.add_argument_group("model parameters")
    for name in ("sigma", "rho", "eta1", "eta2", "v0", "kappa", "theta", "volvol", "corr"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--lambda", dest="lam", type=float, help="jump intensity")
    g.add_argument("--p-up", dest="p_up", type=float, help="up-jump probability")
    g = p.add_argument_group("experiment options")
    g.add_argument("--wing-depth", dest="wing_depth", type=float)
    g.add_argument("--wing-points", dest="wing_points", type=int)
    g.add_argument("--w", choices=("power", "log-power", "pathological"))
    g.add_argument("--w-exponent", dest="w_exponent", type=float)
    g.add_argument("--w-scale", dest="w_scale", type=float)
    g.add_argument("--eps", type=float)
    g.add_argument("--n-max", dest="n_max", type=int)
    g.add_argument("--p-list", dest="p_list", type=_floats, help="comma-separated duality orders")
    return p


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ivwings", description="Implied-volatility wing experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__.splitlines()[0])
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    file_values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"config: {exc}") from None
        file_values = parse_config_text(text, args.config)
    names = {f.name for f in fields(ExperimentConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names}
    return build_config(file_values, overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which matches the config code
        return int(exc.code or 0)
    try:
        cfg = load_config(args)
        report = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IvWingsError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.command != "smile" or not cfg.out:
        sys.stdout.write(report)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
