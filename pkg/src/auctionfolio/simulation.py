"""Monte Carlo designs and the coverage experiment.

Bids are drawn from uniform, beta or power-law distributions censored to the
quantile levels [0.05, 0.95] and rescaled to [0, 1]:

    Q_c(u) = (Q(0.05 + 0.9 u) - Q(0.05)) / (Q(0.95) - Q(0.05)),

so the bid quantile density is bounded away from zero. Auctions have two
bidders, hence A(u) = u and v(u) = Q_c(u) + u q_c(u).
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from . import rng as rng_mod
from .auction_model import BeliefFunctions, beliefs_from_probabilities, value_quantile
from .counterfactuals import _tail_integral, counterfactual_curve, estimate_S, make_spec
from .errors import ConfigError, DomainError
from .inference import (
    SimConfig,
    s_influence,
    simulate_s_suprema,
    simulate_suprema,
    simulated_quantile,
    trimmed_grid,
)
from .quantile_core import EPANECHNIKOV, BidSample, Kernel, rule_of_thumb_bandwidth
from .special import beta_pdf, beta_ppf, betainc

__all__ = [
    "Dgp",
    "parse_dgp",
    "TABLE2_DGPS",
    "sample_bids",
    "sample_uniform_value_bids",
    "dgp_quantile",
    "dgp_quantile_density",
    "TruthCurves",
    "CoverageReport",
    "run_coverage",
    "TARGETS",
    "TABLE2",
    "TABLE2_TRIM",
    "PRESETS",
    "run_preset",
    "truth_curves",
    "two_bidder_beliefs",
    "coverage_csv",
    "coverage_json",
    "write_coverage_csv",
]

TARGETS = ("q", "v", "BS", "Rev", "TS")
_TARGET_LABELS = {"q": "(i)", "v": "(ii)", "BS": "(iii)", "Rev": "(iv)", "TS": "(v)"}


@dataclass(frozen=True)
class Dgp:
    family: str
    params: tuple = ()
    censor_low: float = 0.05
    censor_high: float = 0.95

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        p = tuple(float(x) for x in self.params)
        if fam == "uniform":
            p = ()
        elif fam == "beta":
            if len(p) != 2 or min(p) <= 0:
                raise DomainError("beta needs two positive parameters")
        elif fam == "powerlaw":
            if len(p) != 1 or p[0] <= 0:
                raise DomainError("powerlaw needs one positive exponent")
        else:
            raise DomainError(f"unknown family {self.family!r}; valid: uniform, beta(a,b), powerlaw(alpha)")
        if not (0 <= self.censor_low < self.censor_high <= 1):
            raise DomainError("censoring levels must satisfy 0 <= low < high <= 1")
        object.__setattr__(self, "params", p)

    @property
    def name(self) -> str:
        if self.family == "uniform":
            return "uniform"
        return f"{self.family}({','.join(f'{x:g}' for x in self.params)})"

    # uncensored parent
    def parent_quantile(self, u):
        u = np.asarray(u, dtype=float)
        if self.family == "uniform":
            return u.copy()
        if self.family == "powerlaw":
            return u ** (1.0 / self.params[0])
        a, b = self.params
        if a == 1 and b == 1:
            return u.copy()
        return beta_ppf(a, b, u)

    def parent_quantile_density(self, u):
        u = np.asarray(u, dtype=float)
        if self.family == "uniform":
            return np.ones_like(u)
        if self.family == "powerlaw":
            al = self.params[0]
            return u ** (1.0 / al - 1.0) / al
        a, b = self.params
        return 1.0 / beta_pdf(a, b, self.parent_quantile(u))

    def parent_cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        if self.family == "uniform":
            return x
        if self.family == "powerlaw":
            return x ** self.params[0]
        return betainc(*self.params, x)

    @cached_property
    def _support(self):
        lo, hi = self.parent_quantile(np.array([self.censor_low, self.censor_high]))
        return float(lo), float(hi)

    @property
    def _width(self) -> float:
        return self.censor_high - self.censor_low

    def quantile(self, u):
        """Censored, rescaled bid quantile Q_c(u)."""
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise DomainError("u must lie in [0, 1]")
        lo, hi = self._support
        return (self.parent_quantile(self.censor_low + self._width * u) - lo) / (hi - lo)

    def quantile_density(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise DomainError("u must lie in [0, 1]")
        lo, hi = self._support
        return self._width * self.parent_quantile_density(self.censor_low + self._width * u) / (hi - lo)

    def cdf(self, x):
        """CDF of the censored, rescaled bids."""
        lo, hi = self._support
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        F = (self.parent_cdf(lo + x * (hi - lo)) - self.censor_low) / self._width
        return np.clip(F, 0.0, 1.0)

    def value_quantile(self, u, beliefs: BeliefFunctions | None = None):
        """v(u) = Q_c(u) + A(u) q_c(u); two bidders (A(u) = u) by default."""
        u = np.asarray(u, dtype=float)
        A = u if beliefs is None else beliefs.A(u)
        return self.quantile(u) + A * self.quantile_density(u)


def parse_dgp(text: str) -> Dgp:
    """Parse ``uniform``, ``beta(a,b)`` or ``powerlaw(alpha)``."""
    t = text.strip().lower().replace(" ", "")
    if t == "uniform":
        return Dgp("uniform")
    m = re.fullmatch(r"(beta|powerlaw)\(([^)]*)\)", t)
    if not m:
        raise DomainError(f"cannot parse DGP {text!r}; valid: uniform, beta(a,b), powerlaw(alpha)")
    try:
        params = tuple(float(x) for x in m.group(2).split(","))
    except ValueError:
        raise DomainError(f"bad parameters in {text!r}") from None
    return Dgp(m.group(1), params)


TABLE2_DGPS = ("beta(1,1)", "beta(2,2)", "beta(5,2)", "beta(2,5)", "powerlaw(2)", "powerlaw(3)")

# published coverage of 95% uniform bands, targets (i)-(v)
TABLE2 = {
    (1000, "beta(1,1)"): (0.95, 0.952, 0.912, 0.91, 0.974),
    (1000, "beta(2,2)"): (0.954, 0.954, 0.912, 0.904, 0.97),
    (1000, "beta(5,2)"): (0.952, 0.954, 0.924, 0.916, 0.966),
    (1000, "beta(2,5)"): (0.956, 0.962, 0.902, 0.898, 0.968),
    (1000, "powerlaw(2)"): (0.952, 0.952, 0.928, 0.922, 0.976),
    (1000, "powerlaw(3)"): (0.948, 0.948, 0.93, 0.926, 0.978),
    (10000, "beta(1,1)"): (0.95, 0.948, 0.932, 0.936, 0.96),
    (10000, "beta(2,2)"): (0.954, 0.954, 0.932, 0.934, 0.96),
    (10000, "beta(5,2)"): (0.952, 0.954, 0.93, 0.932, 0.962),
    (10000, "beta(2,5)"): (0.952, 0.952, 0.918, 0.93, 0.958),
    (10000, "powerlaw(2)"): (0.954, 0.952, 0.94, 0.938, 0.96),
    (10000, "powerlaw(3)"): (0.948, 0.952, 0.934, 0.938, 0.96),
    (100000, "beta(1,1)"): (0.95, 0.948, 0.938, 0.942, 0.954),
    (100000, "beta(2,2)"): (0.952, 0.948, 0.944, 0.946, 0.956),
    (100000, "beta(5,2)"): (0.954, 0.952, 0.944, 0.948, 0.956),
    (100000, "beta(2,5)"): (0.956, 0.952, 0.932, 0.948, 0.954),
    (100000, "powerlaw(2)"): (0.944, 0.948, 0.948, 0.948, 0.954),
    (100000, "powerlaw(3)"): (0.946, 0.948, 0.952, 0.95, 0.952),
}
TABLE2_TRIM = {1000: 0.03, 10000: 0.015, 100000: 0.007}


def dgp_quantile(dgp: Dgp, u):
    return dgp.quantile(u)


def dgp_quantile_density(dgp: Dgp, u):
    return dgp.quantile_density(u)


def sample_bids(dgp: Dgp, n: int, rng: np.random.Generator) -> BidSample:
    """Inverse-transform sample of n censored bids."""
    if n < 2:
        raise DomainError("need n >= 2")
    return BidSample.from_bids(dgp.quantile(rng.random(n)))


def sample_uniform_value_bids(n: int, rng: np.random.Generator, M: int = 2) -> BidSample:
    """Equilibrium bids when M bidders always participate with uniform[0, 1] values.

    The bid is v (M - 1) / M, so for two bidders v(u) = u.
    """
    return BidSample.from_bids(rng.random(n) * (M - 1) / M)


class TruthCurves:
    """Population targets of a DGP on the grid j/n, by midpoint quadrature.

    Computed once per (dgp, n) and cached by :func:`truth_curves`.
    """

    def __init__(self, dgp: Dgp, n: int, beliefs: BeliefFunctions, resolution: int = 100_000):
        self.dgp = dgp
        self.n = n
        self.resolution = resolution
        grid = np.arange(1, n) / n
        self.grid = grid
        v = dgp.value_quantile(grid, beliefs)
        self.curves = {"q": dgp.quantile_density(grid), "v": v}
        for name in ("BS", "Rev", "TS"):
            spec = make_spec(name, beliefs)
            integral = _tail_integral(lambda z: spec.psi(z) * dgp.value_quantile(z, beliefs), grid, resolution)
            self.curves[name] = spec.phi(grid) * v + integral

    def on(self, target: str, idx) -> np.ndarray:
        return self.curves[target][idx]


_TRUTH_CACHE: dict = {}


def truth_curves(dgp: Dgp, n: int, resolution: int = 100_000) -> TruthCurves:
    key = (dgp, n, resolution)
    if key not in _TRUTH_CACHE:
        _TRUTH_CACHE[key] = TruthCurves(dgp, n, two_bidder_beliefs(), resolution)
    return _TRUTH_CACHE[key]


def two_bidder_beliefs() -> BeliefFunctions:
    """Every auction has exactly two bidders."""
    return beliefs_from_probabilities([0.0, 1.0])


@dataclass
class CoverageReport:
    dgp: str
    n: int
    trim: float
    alpha: float
    B_outer: int
    B_inner: int
    seed: int
    rates: dict = field(default_factory=dict)
    seconds: float = 0.0

    def __post_init__(self):
        for t, r in self.rates.items():
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"coverage rate for {t} outside [0, 1]")

    def row(self) -> dict:
        r = {"dgp": self.dgp, "n": self.n, "trim": self.trim}
        for t in TARGETS:
            if t in self.rates:
                r[_TARGET_LABELS[t]] = self.rates[t]
        return r

    def to_dict(self) -> dict:
        return asdict(self)


def write_coverage_csv(reports, stream) -> None:
    """One row per (dgp, n, trim), coverage columns (i)-(v)."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["dgp", "n", "trim"] + [_TARGET_LABELS[t] for t in TARGETS])
    for rep in reports:
        w.writerow(
            [rep.dgp, rep.n, repr(rep.trim)]
            + [repr(rep.rates[t]) if t in rep.rates else "" for t in TARGETS]
        )


def coverage_csv(reports) -> str:
    buf = io.StringIO()
    write_coverage_csv(reports, buf)
    return buf.getvalue()


def coverage_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2)


def _replication(r, dgp, n, trim, alpha, B_inner, targets, seed, kernel, studentize, beliefs, specs, truth):
    """Coverage indicators of one outer replication."""
    sample = sample_bids(dgp, n, rng_mod.stream(seed, r, 0))
    h = rule_of_thumb_bandwidth(sample).h
    v_est = value_quantile(sample, beliefs, kernel, h)
    inner_seed = int(rng_mod.stream_key(seed, r, 1)[0])
    cfg = SimConfig(n_sims=B_inner, seed=inner_seed, studentize=studentize)
    idx, grid = trimmed_grid(n, h, trim)
    pseudo = [t if t in ("q", "v") else specs[t] for t in targets if t != "TS"]
    draws = simulate_suprema(n, h, kernel, beliefs, pseudo, cfg, trim) if pseudo else {}
    root = math.sqrt(n * h)
    q = v_est.q_hat[idx]
    out = {}
    for t in targets:
        if t == "TS":
            infl = s_influence(v_est, specs["TS"], trim)
            c = simulated_quantile(simulate_s_suprema(infl, cfg), 1 - alpha)
            center = np.atleast_1d(estimate_S(sample, beliefs, specs["TS"], grid))
            width = c / math.sqrt(n)
        else:
            c = simulated_quantile(draws[t], 1 - alpha)
            width = q * c / root
            if t == "q":
                center = q
            elif t == "v":
                center = v_est.v_hat[idx]
            else:
                center = counterfactual_curve(v_est, specs[t], trim, estimator="T").values
        out[t] = bool(np.all(np.abs(center - truth.on(t, idx)) <= width))
    return out


def run_coverage(
    dgp: Dgp | str,
    n: int = 1000,
    trim: float = 0.03,
    alpha: float = 0.05,
    B_outer: int = 500,
    B_inner: int = 500,
    targets=TARGETS,
    seed: int = 0,
    kernel: Kernel = EPANECHNIKOV,
    threads: int = 1,
    studentize: bool = True,
    progress=None,
) -> CoverageReport:
    """Fraction of replications whose uniform band covers the true curve.

    Each outer replication draws a fresh sample, uses the rule-of-thumb
    bandwidth, simulates its own critical values and checks coverage on
    the whole trimmed grid. Targets q, v, BS and Rev use uniform
    pseudo-bids; TS uses the Gaussian multiplier process.

    Replications run on ``threads`` workers. Every replication owns its
    random streams, so the report does not depend on ``threads``.
    """
    if isinstance(dgp, str):
        dgp = parse_dgp(dgp)
    targets = tuple(targets)
    bad = set(targets) - set(TARGETS)
    if bad or not targets:
        raise DomainError(f"unknown targets {sorted(bad)}; valid: {list(TARGETS)}")
    if not 0 < alpha <= 1:
        raise ConfigError("alpha must lie in (0, 1]")
    if B_outer < 1:
        raise ConfigError("B_outer must be >= 1")
    beliefs = two_bidder_beliefs()
    specs = {k: make_spec(k, beliefs) for k in ("BS", "Rev", "TS")}
    truth = truth_curves(dgp, n)
    args = (dgp, n, trim, alpha, B_inner, targets, seed, kernel, studentize, beliefs, specs, truth)
    start = time.perf_counter()
    results = [None] * B_outer

    def one(r):
        results[r] = _replication(r, *args)
        if progress is not None:
            progress(r + 1, B_outer)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, range(B_outer)))
    else:
        for r in range(B_outer):
            one(r)
    rates = {t: sum(res[t] for res in results) / B_outer for t in targets}
    return CoverageReport(dgp.name, n, trim, alpha, B_outer, B_inner, seed, rates, time.perf_counter() - start)


PRESETS = {
    "desk": {"ns": (1000,), "dgps": ("beta(1,1)", "beta(2,2)", "powerlaw(2)"), "B_outer": 500, "B_inner": 500},
    "desk-quick": {"ns": (1000,), "dgps": TABLE2_DGPS, "B_outer": 200, "B_inner": 200},
    "table2": {"ns": (1000, 10000), "dgps": TABLE2_DGPS, "B_outer": 500, "B_inner": 500},
    "overnight": {"ns": (1000, 10000, 100000), "dgps": TABLE2_DGPS, "B_outer": 500, "B_inner": 500},
}


def run_preset(name: str, seed: int = 0, threads: int = 1, progress=None) -> list:
    """Run a named (n, dgp) grid with the published trims."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; valid: {sorted(PRESETS)}")
    p = PRESETS[name]
    reports = []
    for n in p["ns"]:
        for d in p["dgps"]:
            reports.append(
                run_coverage(d, n, TABLE2_TRIM[n], 0.05, p["B_outer"], p["B_inner"], seed=seed, threads=threads, progress=progress)
            )
    return reports
