"""Command-line interface.

Exit codes: 0 success, 1 invalid input or configuration, 2 I/O failure,
3 numerical failure. Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .auction_model import BeliefFunctions, beliefs_from_probabilities, estimate_beliefs, value_quantile
from .counterfactuals import (
    CounterfactualKind,
    counterfactual_curve,
    make_spec,
    optimal_bid_curve,
    revenue_delta_curve,
)
from .data_pipeline import (
    CsvSchema,
    Formula,
    auction_counts,
    load_csv,
    residualize,
    select_subsample,
    write_manifest,
    write_residuals,
)
from .errors import ConfigError, NumericalError, SchemaError, ValidationError
from .inference import (
    Approximation,
    Side,
    SimConfig,
    reserve_price_test,
    uniform_band_density,
    uniform_band_S,
    uniform_band_T,
    uniform_band_value,
)
from .quantile_core import Bandwidth, BidSample, get_kernel, rule_of_thumb_bandwidth
from .simulation import PRESETS, TABLE2_TRIM, TARGETS, coverage_json, parse_dgp, run_coverage, write_coverage_csv

SEED_ENV = "AUCTIONFOLIO_SEED"


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # unknown flags and bad values are hard errors
        raise UsageError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class RunConfig:
    """Validated options shared by the subcommands."""

    command: str
    input: str | None = None
    output: str | None = None
    bandwidth: float | None = None  # None = rule of thumb
    kernel: str = "epanechnikov"
    alpha: float = 0.05
    n_sims: int = 500
    seed: int = 0
    trim: float | None = None
    bidder_range: tuple | None = None
    kind: str | None = None
    approximation: str = "uniform_pseudo"
    side: str = "two-sided"
    resolution: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.bandwidth is not None:
            Bandwidth(self.bandwidth)
        get_kernel(self.kernel)
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.trim is not None and not 0 <= self.trim < 0.5:
            raise ConfigError(f"trim must lie in [0, 1/2), got {self.trim}")
        if self.n_sims < 100:
            raise ConfigError("n-sims must be at least 100")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.resolution < 0:
            raise ConfigError("resolution must be >= 0")
        if self.bidder_range is not None:
            lo, hi = self.bidder_range
            if lo < 2 or lo > hi:
                raise ConfigError(f"bidder range must satisfy 2 <= lo <= hi, got [{lo}, {hi}]")
        Approximation(self.approximation)
        Side(self.side)

    def sim_config(self, side: str | None = None, n_sims: int | None = None) -> SimConfig:
        return SimConfig(
            n_sims=n_sims or self.n_sims,
            seed=self.seed,
            approximation=self.approximation,
            side=side or self.side,
            threads=self.threads,
        )


# --- input ------------------------------------------------------------------


def _parse_float(text: str, name: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {text!r}") from None
    if not math.isfinite(x):
        raise ConfigError(f"{name} must be finite")
    return x


def _bandwidth(text: str) -> float | None:
    return None if text == "auto" else _parse_float(text, "bandwidth")


def _bidder_range(text: str | None):
    if text is None:
        return None
    parts = text.replace(":", "-").split("-")
    if len(parts) == 1:
        parts = parts * 2
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"bidder range must look like LO-HI, got {text!r}") from None


def _seed(value) -> int:
    if value is None:
        value = os.environ.get(SEED_ENV, "0")
    try:
        s = int(value)
    except ValueError:
        raise ConfigError(f"seed must be an integer, got {value!r}") from None
    if s < 0:
        raise ConfigError("seed must be nonnegative")
    return s


@dataclass
class Dataset:
    sample: BidSample
    beliefs: BeliefFunctions
    residualized: bool


def _header(path: Path) -> list:
    with path.open(newline="") as fh:
        return next(csv.reader(fh), [])


def _split(text: str | None) -> tuple:
    return tuple(c for c in (text or "").split(",") if c)


def load_dataset(args, cfg: RunConfig) -> Dataset:
    """Bids and beliefs from a CSV.

    A ``bid`` column is required. With ``auction_id`` and ``n_bidders``
    the beliefs are estimated from the bidder counts; otherwise every
    auction is taken to have two bidders (or ``--beliefs``). Covariate
    columns trigger residualization unless ``--no-residualize``.
    """
    path = Path(cfg.input)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    header = _header(path)
    if "bid" not in header:
        raise SchemaError("input CSV needs a 'bid' column", [(1, "missing column 'bid'")])
    has_counts = "auction_id" in header and "n_bidders" in header
    numeric, categorical = _split(args.numeric), _split(args.categorical)
    if args.numeric is None and args.categorical is None:
        default = CsvSchema()
        if all(c in header for c in default.numeric + default.categorical):
            numeric, categorical = default.numeric, default.categorical
    if args.no_residualize:
        numeric, categorical = (), ()
    if not has_counts:
        bids = []
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            errors = []
            for row in reader:
                try:
                    b = float(row["bid"])
                except (TypeError, ValueError):
                    errors.append((reader.line_num, f"non-numeric bid {row['bid']!r}"))
                    continue
                if not math.isfinite(b) or b <= 0:
                    errors.append((reader.line_num, f"bid must be positive, got {row['bid']!r}"))
                    continue
                bids.append(b)
            if errors:
                raise SchemaError("invalid bids", errors)
        return Dataset(BidSample.from_bids(np.array(bids)), _manual_beliefs(args), False)
    schema = CsvSchema(numeric=numeric, categorical=categorical)
    records = load_csv(path, schema)
    if numeric or categorical:
        rs = residualize(records, Formula(numeric, categorical), bidder_range=cfg.bidder_range)
        beliefs = _manual_beliefs(args) if args.beliefs else estimate_beliefs(rs.counts)
        return Dataset(rs.sample, beliefs, True)
    M = None
    if cfg.bidder_range is not None:
        sub = select_subsample(records, cfg.bidder_range)
        records, M = sub.records, sub.M
    beliefs = _manual_beliefs(args) if args.beliefs else estimate_beliefs(auction_counts(records, M))
    return Dataset(BidSample.from_bids(np.array([r.bid for r in records])), beliefs, False)


def _manual_beliefs(args) -> BeliefFunctions:
    if not args.beliefs:
        return beliefs_from_probabilities([0.0, 1.0])
    p = [_parse_float(x, "beliefs") for x in args.beliefs.split(",")]
    return beliefs_from_probabilities(p)


# --- output -----------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _curve_csv(columns: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    w.writerow(names)
    cols = [np.asarray(columns[k], dtype=float) for k in names]
    for row in zip(*cols):
        w.writerow(["" if not math.isfinite(x) else repr(float(x)) for x in row])
    return buf.getvalue()


def _thin(n: int, resolution: int) -> np.ndarray:
    """Indices of at most ``resolution`` evenly spaced points (all when 0)."""
    if resolution <= 0 or resolution >= n:
        return np.arange(n)
    return np.unique(np.rint(np.linspace(0, n - 1, resolution)).astype(np.int64))


# --- subcommands ------------------------------------------------------------


def _setup(args, cfg):
    data = load_dataset(args, cfg)
    kernel = get_kernel(cfg.kernel)
    h = cfg.bandwidth if cfg.bandwidth is not None else rule_of_thumb_bandwidth(data.sample).h
    v_est = value_quantile(data.sample, data.beliefs, kernel, h)
    return data, kernel, v_est


def cmd_estimate(args, cfg: RunConfig) -> int:
    data, _, v = _setup(args, cfg)
    k = _thin(v.grid.size, cfg.resolution)
    cols = {"grid": v.grid[k], "Q_hat": v.Q_hat[k], "q_hat": v.q_hat[k], "v_hat": v.v_hat[k]}
    if args.format == "csv":
        _write(_curve_csv(cols), cfg.output)
    else:
        out = dict(cols, h=v.h, n=v.n, kernel=cfg.kernel, residualized=data.residualized,
                   beliefs=v.beliefs.p_check, M=v.beliefs.M)
        _write(dumps(out), cfg.output)
    return 0


def cmd_bands(args, cfg: RunConfig) -> int:
    data, kernel, v = _setup(args, cfg)
    sim = cfg.sim_config()
    target = args.target
    common = dict(kernel=kernel, h=v.h, alpha=cfg.alpha, config=sim, tau=cfg.trim, v_est=v)
    if target == "q":
        band = uniform_band_density(data.sample, data.beliefs, **common)
    elif target == "v":
        band = uniform_band_value(data.sample, data.beliefs, **common)
    elif target == "TS":
        band = uniform_band_S(data.sample, data.beliefs, make_spec("TS", data.beliefs), **common)
    else:
        band = uniform_band_T(data.sample, data.beliefs, make_spec(target, data.beliefs), **common)
    _emit_band(band.to_dict(), args, cfg)
    return 0


def _emit_band(d: dict, args, cfg):
    if args.format == "csv":
        _write(_curve_csv({k: [np.nan if x is None else x for x in d[k]] for k in ("grid", "center", "lower", "upper")}), cfg.output)
    else:
        _write(dumps(d), cfg.output)


def cmd_counterfactual(args, cfg: RunConfig) -> int:
    data, _, v = _setup(args, cfg)
    kind = CounterfactualKind.parse(cfg.kind)
    if kind is CounterfactualKind.OPTIMAL_BID:
        u_star = args.u_star
        if not 0 <= u_star < 1:
            raise ConfigError("u-star must lie in [0, 1)")
        nodes, bids = optimal_bid_curve(v, data.beliefs, u_star)
        k = _thin(nodes.size, cfg.resolution)
        cols = {"u": nodes[k], "bid": bids[k]}
        meta = {"kind": kind.value, "u_star": u_star, "bandwidth": v.h}
    else:
        if kind is CounterfactualKind.REVENUE_DELTA:
            curve = revenue_delta_curve(v, cfg.trim)
        elif kind is CounterfactualKind.CUSTOM:
            raise ConfigError("custom counterfactuals are available from the Python API only")
        else:
            curve = counterfactual_curve(v, make_spec(kind, data.beliefs), cfg.trim)
        k = _thin(curve.grid.size, cfg.resolution)
        cols = {"u_star": curve.grid[k], "value": curve.values[k]}
        meta = {"kind": curve.kind, "estimator": curve.estimator, "bandwidth": v.h}
    if args.format == "csv":
        _write(_curve_csv(cols), cfg.output)
    else:
        _write(dumps(dict(meta, **cols, n=v.n)), cfg.output)
    return 0


def cmd_test_reserve(args, cfg: RunConfig) -> int:
    data, kernel, v = _setup(args, cfg)
    sim = SimConfig(n_sims=cfg.n_sims, seed=cfg.seed, side="lower", threads=cfg.threads)
    res = reserve_price_test(data.sample, data.beliefs, kernel, v.h, cfg.alpha, sim, cfg.trim, args.method, v_est=v)
    d = res.to_dict()
    d["residualized"] = data.residualized
    _write(dumps(d), cfg.output)
    if args.curve:
        Path(args.curve).write_text(
            _curve_csv({"u_star": res.grid, "delta_hat": res.delta_hat, "lower_envelope": res.lower_envelope})
        )
    return 0


def cmd_residualize(args, cfg: RunConfig) -> int:
    path = Path(cfg.input)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    default = CsvSchema()
    numeric = _split(args.numeric) if args.numeric is not None else default.numeric
    categorical = _split(args.categorical) if args.categorical is not None else default.categorical
    records = load_csv(path, CsvSchema(numeric=numeric, categorical=categorical))
    rs = residualize(records, Formula(numeric, categorical), args.fraction, cfg.bidder_range, args.truncation)
    if cfg.output is None:
        raise ConfigError("residualize needs --output")
    write_residuals(rs, cfg.output)
    write_manifest(rs, args.manifest or str(Path(cfg.output).with_suffix(".json")))
    return 0


def cmd_montecarlo(args, cfg: RunConfig) -> int:
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; valid: {sorted(PRESETS)}")
        p = PRESETS[args.preset]
        runs = [(d, n) for n in p["ns"] for d in p["dgps"]]
        b_out, b_in = p["B_outer"], p["B_inner"]
    else:
        dgps = args.dgp or ["beta(1,1)"]
        ns = args.n or [1000]
        runs = [(d, n) for n in ns for d in dgps]
        b_out, b_in = args.b_outer, args.b_inner
    for d, _ in runs:
        parse_dgp(d)  # validate every name before running anything
    targets = _split(args.targets) or TARGETS
    if b_in < 100:
        raise ConfigError("b-inner must be at least 100")
    reports = []
    for d, n in runs:
        trim = cfg.trim if cfg.trim is not None else TABLE2_TRIM.get(n, 0.0)
        progress = None
        if args.verbose:
            progress = lambda r, B, d=d, n=n: print(f"{d} n={n}: {r}/{B}", file=sys.stderr)  # noqa: E731
        reports.append(run_coverage(d, n, trim, cfg.alpha, b_out, b_in, targets, cfg.seed,
                                    get_kernel(cfg.kernel), cfg.threads, progress=progress))
    buf = io.StringIO()
    write_coverage_csv(reports, buf)
    _write(buf.getvalue(), cfg.output)
    if args.json:
        Path(args.json).write_text(coverage_json(reports) + "\n")
    return 0


COMMANDS = {
    "estimate": cmd_estimate,
    "bands": cmd_bands,
    "counterfactual": cmd_counterfactual,
    "test-reserve": cmd_test_reserve,
    "montecarlo": cmd_montecarlo,
    "residualize": cmd_residualize,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="auctionfolio", description="Value quantiles, counterfactuals and uniform bands for first-price auctions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True, sims=False):
        p.add_argument("--output", "-o", help="output file (default: stdout)")
        p.add_argument("--seed", help=f"RNG seed (default: ${SEED_ENV} or 0)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        p.add_argument("--kernel", default="epanechnikov", help="epanechnikov or triweight")
        p.add_argument("--alpha", default="0.05", help="significance level")
        p.add_argument("--trim", help="trimming level tau; evaluation uses [max(h, tau), 1 - max(h, tau)]")
        if data:
            p.add_argument("--input", "-i", required=True, help="CSV with a bid column")
            p.add_argument("--bandwidth", default="auto", help="'auto' (rule of thumb) or a value in (0, 1/2)")
            p.add_argument("--beliefs", help="comma-separated p_1..p_M; default from n_bidders, else two bidders")
            p.add_argument("--bidder-range", help="keep auctions with LO-HI bidders")
            p.add_argument("--numeric", help="comma-separated numeric covariates for residualization")
            p.add_argument("--categorical", help="comma-separated categorical covariates for residualization")
            p.add_argument("--no-residualize", action="store_true", help="use raw bids even if covariates are present")
            p.add_argument("--resolution", type=int, default=0, help="export at most this many grid points (0 = all)")
        if sims:
            p.add_argument("--n-sims", type=int, default=500, help="simulation draws for critical values")
            p.add_argument("--approximation", default="uniform_pseudo", choices=[a.value for a in Approximation])

    p = sub.add_parser("estimate", help="bid quantile, quantile density and value quantile on the grid")
    common(p)
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("bands", help="uniform confidence band for one target")
    common(p, sims=True)
    p.add_argument("--target", default="v", choices=["q", "v", "TS", "BS", "Rev"])
    p.add_argument("--side", default="two-sided", choices=[s.value for s in Side])
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("counterfactual", help="counterfactual curve over exclusion levels")
    common(p)
    p.add_argument("--kind", required=True, choices=["TS", "BS", "Rev", "Delta", "OptimalBid"])
    p.add_argument("--u-star", type=float, default=0.0, help="exclusion level for OptimalBid")
    p.add_argument("--format", choices=["json", "csv"], default="json")

    p = sub.add_parser("test-reserve", help="test whether a reserve price can raise expected revenue")
    common(p, sims=True)
    p.set_defaults(n_sims=1000)
    p.add_argument("--method", choices=["shape", "studentized"], default="shape")
    p.add_argument("--curve", help="CSV file for the lower envelope curve")

    p = sub.add_parser("montecarlo", help="coverage of uniform bands on simulated data")
    common(p, data=False)
    p.add_argument("--preset", help=f"one of {sorted(PRESETS)}")
    p.add_argument("--dgp", action="append", help="uniform, beta(a,b) or powerlaw(alpha); repeatable")
    p.add_argument("--n", type=int, action="append", help="sample size; repeatable")
    p.add_argument("--b-outer", type=int, default=500)
    p.add_argument("--b-inner", type=int, default=500)
    p.add_argument("--targets", help=f"comma-separated subset of {','.join(TARGETS)}")
    p.add_argument("--json", help="also write the reports as JSON")
    p.add_argument("--verbose", action="store_true", help="progress on stderr")

    p = sub.add_parser("residualize", help="log-bid residualization with tail truncation")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", required=True, help="residual CSV")
    p.add_argument("--manifest", help="JSON manifest (default: output with .json suffix)")
    p.add_argument("--numeric", help="comma-separated numeric covariates")
    p.add_argument("--categorical", help="comma-separated categorical covariates")
    p.add_argument("--bidder-range", help="keep auctions with LO-HI bidders")
    p.add_argument("--fraction", type=float, default=0.05, help="fraction dropped from each tail")
    p.add_argument("--truncation", choices=["pooled", "subsample"], default="pooled")
    return parser


def make_config(args) -> RunConfig:
    get = lambda k, d=None: getattr(args, k, d)  # noqa: E731
    kind = get("kind")
    return RunConfig(
        command=args.command,
        input=get("input"),
        output=get("output"),
        bandwidth=_bandwidth(get("bandwidth", "auto")),
        kernel=get("kernel", "epanechnikov"),
        alpha=_parse_float(get("alpha", "0.05"), "alpha"),
        n_sims=get("n_sims", 500),
        seed=_seed(get("seed")),
        trim=None if get("trim") is None else _parse_float(get("trim"), "trim"),
        bidder_range=_bidder_range(get("bidder_range")),
        kind=kind,
        approximation=get("approximation", "uniform_pseudo"),
        side=get("side", "two-sided"),
        resolution=get("resolution", 0),
        threads=get("threads", 1),
    )


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    rows = getattr(exc, "row_errors", None)
    if rows:
        err["rows"] = [{"line": ln, "message": m} for ln, m in rows[:100]]
        err["n_row_errors"] = len(rows)
    cols = getattr(exc, "columns", None)
    if cols:
        err["columns"] = cols
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = make_config(args)
        return COMMANDS[args.command](args, cfg)
    except ValidationError as exc:
        return _fail(1, exc)
    except NumericalError as exc:
        return _fail(3, exc)
    except OSError as exc:
        return _fail(2, exc)
    except (ArithmeticError, FloatingPointError) as exc:
        return _fail(3, exc)


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
