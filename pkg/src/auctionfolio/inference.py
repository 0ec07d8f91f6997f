"""Simulation-based confidence bands and the reserve-price optimality test.

The studentized estimation error of the value quantile (and of counterfactuals
with a point term) is asymptotically the supremum of a pivotal process, so its
critical values can be simulated either from the leading linear term

    Z*(u) = -A(u) G(u),  G(u) = sqrt(nh) (1/n) sum_i [K_h(u - U_i) - 1],

or by rerunning the estimator on uniform[0, 1] pseudo-bids. Integral-only
counterfactuals converge at the parametric rate and use a Gaussian multiplier
simulation instead.
"""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from . import rng
from .auction_model import BeliefFunctions, ValueQuantileEstimate, value_quantile
from .counterfactuals import (
    CounterfactualSpec,
    counterfactual_curve,
    estimate_S,
    make_spec,
    revenue_delta_curve,
)
from .errors import ConfigError, DomainError, ShapeError, TrimError
from .quantile_core import EPANECHNIKOV, BidSample, Kernel, convolve_spacings

__all__ = [
    "Approximation",
    "Side",
    "SimConfig",
    "ConfidenceBand",
    "TestResult",
    "trimmed_grid",
    "simulated_quantile",
    "pointwise_ci_value",
    "linear_term_process",
    "simulate_linear_term",
    "simulate_uniform_pseudo",
    "simulate_suprema",
    "SInfluence",
    "s_influence",
    "simulate_s_suprema",
    "uniform_band_density",
    "uniform_band_value",
    "uniform_band_T",
    "uniform_band_S",
    "reserve_price_test",
]


class Approximation(str, enum.Enum):
    LINEAR_TERM = "linear_term"
    UNIFORM_PSEUDO = "uniform_pseudo"


class Side(str, enum.Enum):
    """Which envelopes a band reports.

    ``LOWER`` bands keep only the lower envelope (upper = +inf); ``UPPER``
    bands keep only the upper envelope.
    """

    TWO_SIDED = "two-sided"
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class SimConfig:
    n_sims: int = 500
    seed: int = 0
    approximation: Approximation = Approximation.UNIFORM_PSEUDO
    side: Side = Side.TWO_SIDED
    threads: int = 1
    # divide the pseudo-sample error by its own q_h: the band scales by the
    # data q_h, so this is the matching pivot
    studentize: bool = True
    chunk_size: int = 0

    def __post_init__(self):
        object.__setattr__(self, "approximation", Approximation(self.approximation))
        object.__setattr__(self, "side", Side(self.side))
        if int(self.n_sims) < 100:
            raise ConfigError("n_sims must be at least 100")
        if int(self.threads) < 1:
            raise ConfigError("threads must be >= 1")


@dataclass(frozen=True)
class ConfidenceBand:
    grid: np.ndarray
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    critical_value: float
    trim: tuple
    side: Side
    target: str
    bandwidth: float | None
    n: int
    n_sims: int
    seed: int
    approximation: str
    iota: np.ndarray | None = None
    degenerate: bool = False

    def covers(self, truth) -> bool:
        truth = np.asarray(truth, dtype=float)
        return bool(np.all((self.lower <= truth) & (truth <= self.upper)))

    def to_dict(self) -> dict:
        def clean(a):
            return [None if not math.isfinite(x) else float(x) for x in np.asarray(a, dtype=float)]

        d = {
            "target": self.target,
            "grid": self.grid.tolist(),
            "center": clean(self.center),
            "lower": clean(self.lower),
            "upper": clean(self.upper),
            "alpha": self.alpha,
            "side": self.side.value,
            "critical_value": self.critical_value,
            "bandwidth": self.bandwidth,
            "trim": list(self.trim),
            "n": self.n,
            "n_sims": self.n_sims,
            "seed": self.seed,
            "approximation": self.approximation,
            "degenerate": self.degenerate,
        }
        if self.iota is not None:
            d["iota"] = clean(self.iota)
        return d


@dataclass(frozen=True)
class TestResult:
    statistic: float
    optimal_exclusion: float
    reject: bool
    alpha: float
    critical_value: float
    grid: np.ndarray = field(repr=False)
    delta_hat: np.ndarray = field(repr=False)
    lower_envelope: np.ndarray = field(repr=False)
    bandwidth: float = 0.0
    n: int = 0
    n_sims: int = 0
    seed: int = 0
    method: str = "shape"

    __test__ = False  # not a pytest class

    @property
    def verdict(self) -> str:
        return "reject" if self.reject else "fail-to-reject"

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "optimal_exclusion": self.optimal_exclusion,
            "reject": self.reject,
            "verdict": self.verdict,
            "alpha": self.alpha,
            "critical_value": self.critical_value,
            "bandwidth": self.bandwidth,
            "n": self.n,
            "n_sims": self.n_sims,
            "seed": self.seed,
            "method": self.method,
        }


def trimmed_grid(n: int, h: float, tau: float | None = None):
    """Indices into the grid j/n (j = 1..n-1) kept by trimming, and the levels."""
    t = max(float(h), float(tau or 0.0))
    grid = np.arange(1, n) / n
    mask = (grid >= t - 1e-12) & (grid <= 1 - t + 1e-12)
    if not mask.any():
        raise TrimError(f"trimming at {t:.4g} leaves no grid points")
    return np.flatnonzero(mask), grid[mask]


def simulated_quantile(draws, level: float) -> float:
    """Order statistic ceil(B * level) of the simulated draws."""
    draws = np.sort(np.asarray(draws, dtype=float))
    B = draws.size
    if level <= 0:
        return 0.0
    k = int(math.ceil(B * level - 1e-9))
    # the upper tail must hold at least one draw, else c is just the maximum
    if k > B or k < 1 or B * (1.0 - level) < 1.0 - 1e-9:
        raise ConfigError(f"{B} simulations cannot resolve the {level:.4g} quantile")
    return float(draws[k - 1])


def _side_stat(Z: np.ndarray, side: Side) -> np.ndarray:
    if side is Side.TWO_SIDED:
        return np.max(np.abs(Z), axis=-1)
    if side is Side.LOWER:
        return np.max(Z, axis=-1)
    return np.max(-Z, axis=-1)


def _chunks(n_sims: int, n: int, chunk_size: int):
    size = chunk_size or max(1, min(n_sims, 4_000_000 // max(n, 1)))
    return [range(s, min(s + size, n_sims)) for s in range(0, n_sims, size)]


def _run_chunks(fn, chunks, threads: int):
    if threads <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def pointwise_ci_value(v_est: ValueQuantileEstimate, u, alpha: float = 0.05):
    """Normal-approximation interval v_h(u) +/- A q_h sqrt(R_K / (nh)) z."""
    h = v_est.h
    if not (0 < alpha <= 1):
        raise DomainError("alpha must lie in (0, 1]")
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any((u_arr < h - 1e-12) | (u_arr > 1 - h + 1e-12)):
        raise TrimError("u must lie in [h, 1 - h]")
    z = NormalDist().inv_cdf(1 - alpha / 2)
    v = np.atleast_1d(v_est.at(u_arr))
    from .quantile_core import quantile_density_direct

    q = quantile_density_direct(np.diff(v_est.sample.bids_sorted), v_est.kernel, h, u_arr)
    half = v_est.beliefs.A(u_arr) * q * math.sqrt(v_est.kernel.roughness / (v_est.n * h)) * z
    lo, hi = v - half, v + half
    if np.ndim(u) == 0:
        return float(lo[0]), float(hi[0])
    return lo, hi


# --- leading linear term -----------------------------------------------------


def _kernel_sums(x_sorted: np.ndarray, points: np.ndarray, h: float, kernel: Kernel) -> np.ndarray:
    """sum_i K((p - x_i) / h) for every point p, exactly, in O((n + m) log n).

    Points are grouped into blocks; inside a block the polynomial kernel is
    expanded around the block centre and the window sums come from prefix
    sums of local moments, which keeps the expansion well conditioned.
    """
    coeffs = np.asarray(kernel.coeffs, dtype=float)
    deg = coeffs.size - 1
    binom = [[math.comb(k, r) for r in range(deg + 1)] for k in range(deg + 1)]
    out = np.zeros(points.size)
    width = 2.0 * h
    block = np.floor(points / width).astype(np.int64)
    starts = np.flatnonzero(np.r_[True, block[1:] != block[:-1]])
    ends = np.r_[starts[1:], points.size]
    lo_all = np.searchsorted(x_sorted, points - h, side="left")
    hi_all = np.searchsorted(x_sorted, points + h, side="right")
    for s, e in zip(starts, ends):
        c = (block[s] + 0.5) * width
        lo, hi = lo_all[s], hi_all[e - 1]
        if hi <= lo:
            continue
        loc = (c - x_sorted[lo:hi]) / h
        powers = np.ones((deg + 1, loc.size))
        for r in range(1, deg + 1):
            powers[r] = powers[r - 1] * loc
        pref = np.zeros((deg + 1, loc.size + 1))
        np.cumsum(powers, axis=1, out=pref[:, 1:])
        a = lo_all[s:e] - lo
        b = hi_all[s:e] - lo
        mom = pref[:, b] - pref[:, a]  # (deg+1, m)
        d = (points[s:e] - c) / h
        dpow = np.ones((deg + 1, d.size))
        for r in range(1, deg + 1):
            dpow[r] = dpow[r - 1] * d
        acc = np.zeros(d.size)
        for k in range(deg + 1):
            if coeffs[k] == 0:
                continue
            term = np.zeros(d.size)
            for r in range(k + 1):
                term += binom[k][r] * dpow[k - r] * mom[r]
            acc += coeffs[k] * term
        out[s:e] = acc
    return out


def linear_term_process(U_sorted: np.ndarray, points: np.ndarray, h: float, kernel: Kernel = EPANECHNIKOV) -> np.ndarray:
    """G(u) = sqrt(nh) [(1/n) sum_i K_h(u - U_i) - 1] at the given points.

    E K_h(u - U) = 1 exactly for u in [h, 1 - h].
    """
    n = U_sorted.size
    S = _kernel_sums(U_sorted, points, h, kernel)
    return math.sqrt(n * h) * (S / (n * h) - 1.0)


def _weight_on(weight, grid):
    if callable(weight):
        w = np.asarray(weight(grid), dtype=float)
        return np.broadcast_to(w, grid.shape).copy()
    w = np.asarray(weight, dtype=float)
    return np.broadcast_to(w, grid.shape).copy()


def simulate_linear_term(
    n: int,
    h: float,
    kernel: Kernel = EPANECHNIKOV,
    weight: Callable | float = 1.0,
    config: SimConfig = SimConfig(),
    tau: float | None = None,
    weights: dict | None = None,
) -> np.ndarray:
    """Suprema of weight(u) G(u) over the trimmed grid, one per replication.

    ``weights`` maps target names to weights and returns a dict of suprema
    computed from the same uniform draws.
    """
    _, grid = trimmed_grid(n, h, tau)
    named = weights if weights is not None else {"_": weight}
    W = {k: _weight_on(w, grid) for k, w in named.items()}
    out = {k: np.empty(config.n_sims) for k in W}

    def work(idx):
        for r in idx:
            U = rng.stream(config.seed, 0, r).random(n)
            U.sort()
            G = linear_term_process(U, grid, h, kernel)
            for k, w in W.items():
                out[k][r] = _side_stat(w * G, config.side)

    _run_chunks(work, _chunks(config.n_sims, n, config.chunk_size), config.threads)
    return out if weights is not None else out["_"]


# --- uniform pseudo-bids ----------------------------------------------------


class _PseudoTarget:
    """Pieces needed to evaluate one target on a batch of pseudo-samples."""

    def __init__(self, name, n, h, grid, idx, beliefs, spec=None, iota=None):
        self.name = name
        self.idx = idx
        self.grid = grid
        self.root = math.sqrt(n * h)
        self.A = beliefs.A(grid) if beliefs is not None else None
        self.iota = None if iota is None else _weight_on(iota, grid)
        self.spec = spec
        if spec is not None:
            edges = np.arange(n + 1) / n
            self.phi = np.asarray(spec.phi(grid), dtype=float) * np.ones_like(grid)
            chi_w = spec.chi(0.5 * (edges[:-1] + edges[1:])) / n
            self.w = chi_w  # cell weights for the S part
            self.point = beliefs.A(grid) * spec.psi(grid)
            self.end = float(beliefs.A(1.0) * spec.psi(1.0))
            self.T_true = self._population_T(spec, beliefs, n, grid)

    @staticmethod
    def _population_T(spec, beliefs, n, grid):
        # T under uniform bids, v(u) = u + A(u); 4-point Gauss per cell
        nodes, wts = np.polynomial.legendre.leggauss(4)
        edges = np.arange(n + 1) / n
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 / n
        pts = (mid[:, None] + half * nodes[None, :]).ravel()
        f = spec.psi(pts) * (pts + beliefs.A(pts))
        cells = half * (f.reshape(n, 4) @ wts)
        tail = np.zeros(n + 1)
        tail[:-1] = np.cumsum(cells[::-1])[::-1]
        j = np.rint(grid * n).astype(np.int64)
        return np.asarray(spec.phi(grid)) * (grid + beliefs.A(grid)) + tail[j]

    def process(self, U, q, studentize):
        """Z on the trimmed grid for a batch: U sorted (B, n), q (B, n-1)."""
        qg = q[:, self.idx]
        Qg = U[:, self.idx + 1]
        if self.name == "shape":
            Z = qg - 1.0
            return Z if self.iota is None else Z / self.iota
        if self.name == "q":
            err = qg - 1.0
        elif self.name == "v":
            err = (Qg - self.grid) + self.A * (qg - 1.0)
        else:
            n = U.shape[1]
            tail = np.zeros((U.shape[0], n + 1))
            tail[:, :-1] = np.cumsum((U * self.w)[:, ::-1], axis=1)[:, ::-1]
            j = self.idx + 1  # grid level j/n
            S = tail[:, j] - self.point * Qg + self.end * U[:, -1:]
            v = Qg + self.A * qg
            err = self.phi * v + S - self.T_true
        Z = self.root * err
        if studentize:
            Z = Z / qg
        if self.iota is not None:
            Z = Z / self.iota
        return Z


def _target_name(target):
    if isinstance(target, CounterfactualSpec):
        return target.kind.value
    return str(target)


def simulate_suprema(
    n: int,
    h: float,
    kernel: Kernel,
    beliefs: BeliefFunctions,
    targets: Sequence,
    config: SimConfig,
    tau: float | None = None,
    iotas: dict | None = None,
) -> dict:
    """Suprema for several targets from shared uniform pseudo-samples.

    Targets are ``"q"`` (bid quantile density), ``"v"`` (value quantile),
    ``"shape"`` (unnormalized q_h - 1) or a :class:`CounterfactualSpec`.
    Returns ``{name: suprema}``.
    """
    idx, grid = trimmed_grid(n, h, tau)
    iotas = iotas or {}
    tg = []
    for t in targets:
        name = _target_name(t)
        spec = t if isinstance(t, CounterfactualSpec) else None
        if spec is None and name not in ("q", "v", "shape"):
            raise DomainError(f"unknown simulation target {t!r}")
        tg.append(_PseudoTarget(name, n, h, grid, idx, beliefs, spec, iotas.get(name)))
    out = {t.name: np.empty(config.n_sims) for t in tg}

    def work(chunk):
        U = rng.sorted_uniforms(config.seed, list(chunk), n, prefix=(1,))
        q = convolve_spacings(np.diff(U, axis=1), kernel, h)
        for t in tg:
            out[t.name][chunk.start : chunk.stop] = _side_stat(t.process(U, q, config.studentize), config.side)

    _run_chunks(work, _chunks(config.n_sims, n, config.chunk_size), config.threads)
    return out


def simulate_uniform_pseudo(
    n: int,
    h: float,
    kernel: Kernel = EPANECHNIKOV,
    beliefs: BeliefFunctions | None = None,
    target="v",
    config: SimConfig = SimConfig(),
    tau: float | None = None,
    iota=None,
) -> np.ndarray:
    """Suprema of the estimation-error process recomputed on uniform pseudo-bids."""
    name = _target_name(target)
    res = simulate_suprema(n, h, kernel, beliefs, [target], config, tau, {name: iota} if iota is not None else None)
    return res[name]


def _critical_value(draws, alpha, side):
    return simulated_quantile(draws, 1.0 - alpha)


def _envelopes(center, width, side):
    if side is Side.TWO_SIDED:
        return center - width, center + width
    if side is Side.LOWER:
        return center - width, np.full_like(center, np.inf)
    return np.full_like(center, -np.inf), center + width


def _estimate(sample, beliefs, kernel, h):
    return value_quantile(sample, beliefs, kernel, h)


def uniform_band_density(
    sample: BidSample,
    beliefs: BeliefFunctions,
    kernel: Kernel = EPANECHNIKOV,
    h=None,
    alpha: float = 0.05,
    config: SimConfig = SimConfig(),
    tau: float | None = None,
    v_est: ValueQuantileEstimate | None = None,
    draws=None,
) -> ConfidenceBand:
    """Uniform band q_h(u) (1 +/- c / sqrt(nh)) for the bid quantile density."""
    v_est = v_est or _estimate(sample, beliefs, kernel, h)
    n, hh = v_est.n, v_est.h
    idx, grid = trimmed_grid(n, hh, tau)
    if draws is None:
        if config.approximation is Approximation.LINEAR_TERM:
            draws = simulate_linear_term(n, hh, kernel, -1.0, config, tau)
        else:
            draws = simulate_uniform_pseudo(n, hh, kernel, beliefs, "q", config, tau)
    c = _critical_value(draws, alpha, config.side)
    q = v_est.q_hat[idx]
    lo, hi = _envelopes(q, q * c / math.sqrt(n * hh), config.side)
    return ConfidenceBand(
        grid, q, lo, hi, alpha, c, (grid[0], grid[-1]), config.side, "q", hh, n,
        config.n_sims, config.seed, config.approximation.value,
    )


def uniform_band_value(
    sample: BidSample,
    beliefs: BeliefFunctions,
    kernel: Kernel = EPANECHNIKOV,
    h=None,
    alpha: float = 0.05,
    config: SimConfig = SimConfig(),
    tau: float | None = None,
    v_est: ValueQuantileEstimate | None = None,
    draws=None,
) -> ConfidenceBand:
    """Uniform band v_h(u) +/- q_h(u) c / sqrt(nh) on the trimmed grid."""
    v_est = v_est or _estimate(sample, beliefs, kernel, h)
    n, hh = v_est.n, v_est.h
    idx, grid = trimmed_grid(n, hh, tau)
    if draws is None:
        if config.approximation is Approximation.LINEAR_TERM:
            draws = simulate_linear_term(n, hh, kernel, lambda u: -beliefs.A(u), config, tau)
        else:
            draws = simulate_uniform_pseudo(n, hh, kernel, beliefs, "v", config, tau)
    c = _critical_value(draws, alpha, config.side)
    center = v_est.v_hat[idx]
    lo, hi = _envelopes(center, v_est.q_hat[idx] * c / math.sqrt(n * hh), config.side)
    return ConfidenceBand(
        grid, center, lo, hi, alpha, c, (grid[0], grid[-1]), config.side, "v", hh, n,
        config.n_sims, config.seed, config.approximation.value,
    )


def uniform_band_T(
    sample: BidSample,
    beliefs: BeliefFunctions,
    spec: CounterfactualSpec,
    kernel: Kernel = EPANECHNIKOV,
    h=None,
    alpha: float = 0.05,
    iota=None,
    config: SimConfig = SimConfig(),
    tau: float | None = None,
    v_est: ValueQuantileEstimate | None = None,
    draws=None,
) -> ConfidenceBand:
    """Uniform band T_h(u*) +/- iota(u*) q_h(u*) c / sqrt(nh).

    With phi identically zero the point term vanishes, the band collapses onto
    the estimate and is flagged ``degenerate``; use :func:`uniform_band_S`.
    """
    v_est = v_est or _estimate(sample, beliefs, kernel, h)
    n, hh = v_est.n, v_est.h
    idx, grid = trimmed_grid(n, hh, tau)
    iota_vals = None
    if iota is not None:
        iota_vals = _weight_on(iota, grid)
        if np.min(np.abs(iota_vals)) <= 1e-12:
            raise ShapeError("band shape iota must stay away from zero on the trimmed grid")
    curve = counterfactual_curve(v_est, spec, tau, estimator="T")
    center = curve.values
    shape = iota_vals if iota_vals is not None else np.ones_like(grid)
    if spec.phi_is_zero(grid):
        warnings.warn("phi is identically zero: T-type band is degenerate, use uniform_band_S", stacklevel=2)
        return ConfidenceBand(
            grid, center, center.copy(), center.copy(), alpha, 0.0, (grid[0], grid[-1]), config.side,
            spec.kind.value, hh, n, config.n_sims, config.seed, config.approximation.value, iota_vals, True,
        )
    if draws is None:
        if config.approximation is Approximation.LINEAR_TERM:
            w = -np.asarray(spec.phi(grid)) * beliefs.A(grid) / shape
            draws = simulate_linear_term(n, hh, kernel, w, config, tau)
        else:
            draws = simulate_uniform_pseudo(n, hh, kernel, beliefs, spec, config, tau, iota=iota_vals)
    c = _critical_value(draws, alpha, config.side)
    lo, hi = _envelopes(center, shape * v_est.q_hat[idx] * c / math.sqrt(n * hh), config.side)
    return ConfidenceBand(
        grid, center, lo, hi, alpha, c, (grid[0], grid[-1]), config.side, spec.kind.value, hh, n,
        config.n_sims, config.seed, config.approximation.value, iota_vals,
    )


# --- S-type multiplier simulation ------------------------------------------


class SInfluence:
    """Influence function of the S-type estimator with q replaced by q_h.

    f_{u*}(U) = -int_{u*}^1 chi(u) q_h(u) 1(U <= u) du + A(u*) psi(u*) q_h(u*) 1(U <= u*)
              = -C(max(u*, U)) + a(u*) 1(U <= u*),

    where C(t) = int_t^1 chi q_h is tabulated at the nodes k/n and linear in
    between.
    """

    def __init__(self, v_est: ValueQuantileEstimate, spec: CounterfactualSpec, idx: np.ndarray):
        n = v_est.n
        self.n = n
        self.idx = idx
        self.grid = (idx + 1) / n
        q = v_est.q_hat
        q_nodes = np.concatenate([[q[0]], q, [q[-1]]])  # levels 0..n
        edges = np.arange(n + 1) / n
        mids = 0.5 * (edges[:-1] + edges[1:])
        cells = spec.chi(mids) * 0.5 * (q_nodes[:-1] + q_nodes[1:]) / n
        C = np.zeros(n + 1)
        C[:-1] = np.cumsum(cells[::-1])[::-1]
        self.C = C
        # int_t^1 C by the trapezoid rule, exact for piecewise-linear C
        trap = 0.5 * (C[:-1] + C[1:]) / n
        self.C_tail = np.zeros(n + 1)
        self.C_tail[:-1] = np.cumsum(trap[::-1])[::-1]
        j = idx + 1
        self.a = v_est.beliefs.A(self.grid) * spec.psi(self.grid) * q[idx]
        self.mean = -(self.grid * C[j] + self.C_tail[j]) + self.a * self.grid

    def C_at(self, t):
        return np.interp(t, np.arange(self.n + 1) / self.n, self.C)

    def values(self, k: int, U) -> np.ndarray:
        """f_{u*}(U) at the k-th trimmed grid point."""
        u = self.grid[k]
        U = np.asarray(U, dtype=float)
        return -self.C_at(np.maximum(u, U)) + self.a[k] * (U <= u)

    def process(self, U: np.ndarray) -> np.ndarray:
        """G(u*) on the trimmed grid for a batch of uniform samples (B, n)."""
        B, m = U.shape
        n = self.n
        bins = np.minimum((U * n).astype(np.int64), n - 1)
        rows = np.repeat(np.arange(B), m)
        flat = rows * n + bins.ravel()
        cnt = np.bincount(flat, minlength=B * n).reshape(B, n)
        csum = np.bincount(flat, weights=self.C_at(U).ravel(), minlength=B * n).reshape(B, n)
        j = self.idx + 1
        below = np.cumsum(cnt, axis=1)[:, j - 1]  # #U < j/n
        above = np.cumsum(csum[:, ::-1], axis=1)[:, ::-1][:, j]  # sum of C(U) over U >= j/n
        total = -(below * self.C[j] + above) + self.a * below
        return (total - m * self.mean) / math.sqrt(m)


def s_influence(v_est: ValueQuantileEstimate, spec: CounterfactualSpec, tau: float | None = None) -> SInfluence:
    idx, _ = trimmed_grid(v_est.n, v_est.h, tau)
    return SInfluence(v_est, spec, idx)


def simulate_s_suprema(infl: SInfluence, config: SimConfig) -> np.ndarray:
    out = np.empty(config.n_sims)

    def work(chunk):
        U = np.stack([rng.stream(config.seed, 2, r).random(infl.n) for r in chunk])
        out[chunk.start : chunk.stop] = _side_stat(infl.process(U), config.side)

    _run_chunks(work, _chunks(config.n_sims, infl.n, config.chunk_size), config.threads)
    return out


def uniform_band_S(
    sample: BidSample,
    beliefs: BeliefFunctions,
    spec: CounterfactualSpec,
    kernel: Kernel = EPANECHNIKOV,
    h=None,
    alpha: float = 0.05,
    config: SimConfig = SimConfig(),
    tau: float | None = None,
    v_est: ValueQuantileEstimate | None = None,
) -> ConfidenceBand:
    """Uniform band S(u*) +/- c / sqrt(n) from the Gaussian multiplier process."""
    v_est = v_est or _estimate(sample, beliefs, kernel, h)
    n, hh = v_est.n, v_est.h
    infl = s_influence(v_est, spec, tau)
    draws = simulate_s_suprema(infl, config)
    c = _critical_value(draws, alpha, config.side)
    center = np.atleast_1d(estimate_S(v_est.sample, beliefs, spec, infl.grid))
    lo, hi = _envelopes(center, np.full_like(center, c / math.sqrt(n)), config.side)
    return ConfidenceBand(
        infl.grid, center, lo, hi, alpha, c, (infl.grid[0], infl.grid[-1]), config.side,
        spec.kind.value, hh, n, config.n_sims, config.seed, "gaussian_multiplier",
    )


# --- reserve price test -----------------------------------------------------


def reserve_price_test(
    sample: BidSample,
    beliefs: BeliefFunctions,
    kernel: Kernel = EPANECHNIKOV,
    h=None,
    alpha: float = 0.05,
    config: SimConfig | None = None,
    tau: float | None = None,
    method: str = "shape",
    M: int | None = None,
    v_est: ValueQuantileEstimate | None = None,
) -> TestResult:
    """Test H0: no exclusion level in [h, 1 - h] raises expected revenue.

    ``method="shape"`` takes c as the (1 - alpha)-quantile of
    sup (q_h^U - 1) over pseudo-samples and the lower envelope
    Delta_h(u) - M a A3(u) A(u) q_h(u) c. ``method="studentized"`` uses the
    one-sided T-type statistic with the same shape. H0 is rejected when the
    envelope is positive somewhere.
    """
    config = config or SimConfig(n_sims=1000)
    config = SimConfig(config.n_sims, config.seed, config.approximation, Side.LOWER, config.threads, config.studentize, config.chunk_size)
    v_est = v_est or _estimate(sample, beliefs, kernel, h)
    n, hh = v_est.n, v_est.h
    idx, grid = trimmed_grid(n, hh, tau)
    Mv = beliefs.M if M is None else int(M)
    iota = Mv * beliefs.a_check * beliefs.A3(grid) * beliefs.A(grid)
    delta = revenue_delta_curve(v_est, tau, M).values
    q = v_est.q_hat[idx]
    if method == "shape":
        draws = simulate_suprema(n, hh, kernel, beliefs, ["shape"], config, tau)["shape"]
        c = simulated_quantile(draws, 1.0 - alpha)
        lower = delta - iota * q * c
    elif method == "studentized":
        if np.min(np.abs(iota)) <= 1e-12:
            raise ShapeError("revenue band shape vanishes on the trimmed grid")
        spec = make_spec("Rev", beliefs, M)
        draws = simulate_suprema(n, hh, kernel, beliefs, [spec], config, tau, {spec.kind.value: iota})[spec.kind.value]
        c = simulated_quantile(draws, 1.0 - alpha)
        lower = delta - iota * q * c / math.sqrt(n * hh)
    else:
        raise DomainError(f"unknown test method {method!r}")
    k = int(np.argmax(lower))
    stat = float(lower[k])
    return TestResult(
        statistic=stat,
        optimal_exclusion=float(grid[k]),
        reject=stat > 0,
        alpha=alpha,
        critical_value=c,
        grid=grid,
        delta_hat=delta,
        lower_envelope=lower,
        bandwidth=hh,
        n=n,
        n_sims=config.n_sims,
        seed=config.seed,
        method=method,
    )
