"""Counterfactual functionals linear in the value quantile function.

A counterfactual at exclusion level u* has the form

    T(u*) = phi(u*) v(u*) + int_{u*}^1 psi(x) v(x) dx.

The integral part is estimated without a bandwidth by integrating by parts
against the empirical bid quantile (``estimate_S``); the point term needs
the kernel estimate of v (``estimate_T``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .auction_model import BeliefFunctions, ValueQuantileEstimate, value_quantile
from .errors import DomainError, SingularityError, TrimError
from .quantile_core import EPANECHNIKOV, BidSample, Kernel, floor_index, quantile_density_direct

__all__ = [
    "CounterfactualKind",
    "CounterfactualSpec",
    "CounterfactualCurve",
    "make_spec",
    "custom_spec",
    "estimate_S",
    "estimate_T",
    "counterfactual_curve",
    "revenue_delta",
    "revenue_delta_curve",
    "optimal_bid",
    "optimal_bid_curve",
    "participation_probability",
    "population_counterfactual",
    "population_delta",
]


class CounterfactualKind(str, enum.Enum):
    TOTAL_SURPLUS = "TS"
    BIDDER_SURPLUS = "BS"
    REVENUE = "Rev"
    REVENUE_DELTA = "Delta"
    OPTIMAL_BID = "OptimalBid"
    CUSTOM = "Custom"

    @classmethod
    def parse(cls, value) -> "CounterfactualKind":
        if isinstance(value, cls):
            return value
        for k in cls:
            if value in (k.value, k.name) or str(value).lower() == k.value.lower():
                return k
        raise DomainError(f"unknown counterfactual kind {value!r}")


@dataclass(frozen=True, eq=False)
class CounterfactualSpec:
    """(phi, psi) pair with psi' supplied analytically."""

    kind: CounterfactualKind
    phi: Callable
    psi: Callable
    dpsi: Callable
    beliefs: BeliefFunctions

    def chi(self, u):
        """chi(u) = (1 - A'(u)) psi(u) - A(u) psi'(u)."""
        b = self.beliefs
        return (1.0 - b.dA(u)) * self.psi(u) - b.A(u) * self.dpsi(u)

    def phi_is_zero(self, grid) -> bool:
        return bool(np.all(np.asarray(self.phi(np.asarray(grid, dtype=float))) == 0))


def _zero(u):
    return np.zeros_like(np.asarray(u, dtype=float))


def make_spec(kind, beliefs: BeliefFunctions, M: int | None = None) -> CounterfactualSpec:
    """Quantile-form (phi, psi) for the standard counterfactuals.

    Total surplus has no point term; bidder surplus is
    ``-a A3(u*) v(u*) - a int A3' v``; revenue is total surplus minus M times
    bidder surplus. ``Delta`` shares the revenue pair.
    """
    kind = CounterfactualKind.parse(kind)
    M = beliefs.M if M is None else int(M)
    a = beliefs.a_check
    b = beliefs
    if kind is CounterfactualKind.TOTAL_SURPLUS:
        return CounterfactualSpec(kind, _zero, b.dA2, b.d2A2, b)
    if kind is CounterfactualKind.BIDDER_SURPLUS:
        return CounterfactualSpec(
            kind,
            lambda u: -a * b.A3(u),
            lambda u: -a * b.dA3(u),
            lambda u: -a * b.d2A3(u),
            b,
        )
    if kind in (CounterfactualKind.REVENUE, CounterfactualKind.REVENUE_DELTA):
        Ma = M * a
        return CounterfactualSpec(
            kind,
            lambda u: Ma * b.A3(u),
            lambda u: b.dA2(u) + Ma * b.dA3(u),
            lambda u: b.d2A2(u) + Ma * b.d2A3(u),
            b,
        )
    raise DomainError(f"no (phi, psi) pair for kind {kind.value!r}; use custom_spec")


def custom_spec(phi, psi, dpsi, beliefs: BeliefFunctions) -> CounterfactualSpec:
    return CounterfactualSpec(CounterfactualKind.CUSTOM, phi, psi, dpsi, beliefs)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def _cell_integrals(f, lo, hi, rule: str):
    """int_lo^hi f per cell, midpoint or 5-point Gauss-Legendre."""
    width = hi - lo
    if rule == "midpoint":
        return f(0.5 * (lo + hi)) * width
    if rule == "gauss":
        mid = 0.5 * (lo + hi)
        pts = mid[:, None] + 0.5 * width[:, None] * _GL_NODES[None, :]
        vals = f(pts.ravel()).reshape(pts.shape)
        return 0.5 * width * (vals @ _GL_WEIGHTS)
    raise DomainError(f"unknown integration rule {rule!r}")


def estimate_S(sample: BidSample, beliefs: BeliefFunctions, spec: CounterfactualSpec, u_star, rule: str = "midpoint"):
    """Bandwidth-free estimate of int_{u*}^1 psi(x) v(x) dx.

    Integrating by parts against the empirical quantile gives

        sum_{i=floor(n u*)}^{n-1} b_(i+1) int_{max(i, n u*)/n}^{(i+1)/n} chi
            - A(u*) psi(u*) b_(floor(n u*)+1) + A(1) psi(1) b_(n),

    with b_(n) standing in for the point term at u* = 1. Accepts a scalar or
    an array of levels.
    """
    b = sample.bids_sorted
    n = b.size
    u = np.atleast_1d(np.asarray(u_star, dtype=float))
    if np.any((u < 0) | (u > 1)):
        raise DomainError("u* must lie in [0, 1]")
    k = np.minimum(floor_index(n * u), n)
    edges = np.arange(n + 1) / n
    w = _cell_integrals(spec.chi, edges[:-1], edges[1:], rule)
    tail = np.zeros(n + 1)
    tail[:-1] = np.cumsum((b * w)[::-1])[::-1]
    kk = np.minimum(k, n - 1)
    lo = np.maximum(u, kk / n)
    partial = np.where(k < n, b[kk] * _cell_integrals(spec.chi, lo, (kk + 1) / n, rule), 0.0)
    body = partial + tail[np.minimum(k + 1, n)]
    point = beliefs.A(u) * spec.psi(u) * b[kk]
    end = float(beliefs.A(1.0) * spec.psi(1.0)) * b[-1]
    out = body - point + end
    return float(out[0]) if np.ndim(u_star) == 0 else out


def _check_trim(u, h):
    u = np.atleast_1d(u)
    if np.any((u < h - 1e-12) | (u > 1 - h + 1e-12)):
        raise TrimError(f"u* must lie in the trimmed interval [{h:.6g}, {1 - h:.6g}]")


def estimate_T(
    sample: BidSample,
    beliefs: BeliefFunctions,
    spec: CounterfactualSpec,
    kernel: Kernel = EPANECHNIKOV,
    h=None,
    u_star=None,
):
    """phi(u*) v_h(u*) + S_psi(u*) for u* in [h, 1 - h]."""
    h = float(getattr(h, "h", h))
    u = np.atleast_1d(np.asarray(u_star, dtype=float))
    _check_trim(u, h)
    S = np.atleast_1d(estimate_S(sample, beliefs, spec, u))
    phi = np.asarray(spec.phi(u), dtype=float)
    v = np.zeros_like(u)
    nz = phi != 0
    if np.any(nz):
        q = quantile_density_direct(np.diff(sample.bids_sorted), kernel, h, u[nz])
        idx = np.minimum(floor_index(sample.n * u[nz]), sample.n - 1)
        v[nz] = sample.bids_sorted[idx] + beliefs.A(u[nz]) * q
    out = phi * v + S
    return float(out[0]) if np.ndim(u_star) == 0 else out


@dataclass(frozen=True)
class CounterfactualCurve:
    kind: str
    grid: np.ndarray
    values: np.ndarray
    estimator: str  # "S" or "T"
    bandwidth: float | None = None

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "estimator": self.estimator,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
        }
        if self.bandwidth is not None:
            d["bandwidth"] = self.bandwidth
        return d


def counterfactual_curve(
    v_est: ValueQuantileEstimate,
    spec: CounterfactualSpec,
    tau: float | None = None,
    estimator: str | None = None,
) -> CounterfactualCurve:
    """T (or S) estimate on the trimmed canonical grid."""
    h = v_est.h
    t = max(h, tau or 0.0)
    mask = (v_est.grid >= t - 1e-12) & (v_est.grid <= 1 - t + 1e-12)
    grid = v_est.grid[mask]
    S = estimate_S(v_est.sample, v_est.beliefs, spec, grid)
    if estimator is None:
        estimator = "S" if spec.phi_is_zero(grid) else "T"
    if estimator == "S":
        return CounterfactualCurve(spec.kind.value, grid, np.atleast_1d(S), "S")
    vals = spec.phi(grid) * v_est.v_hat[mask] + S
    return CounterfactualCurve(spec.kind.value, grid, vals, "T", bandwidth=h)


def revenue_delta(
    sample: BidSample,
    beliefs: BeliefFunctions,
    kernel: Kernel = EPANECHNIKOV,
    h=None,
    u_star=None,
    M: int | None = None,
):
    """Change in expected revenue from raising the exclusion level 0 -> u*.

    Delta(u*) = phi(u*) v(u*) - int_0^{u*} psi v, taking the original reserve
    equal to v(0) = 0; the integral is the difference of two S-type
    estimates at 0 and u*.
    """
    spec = make_spec(CounterfactualKind.REVENUE_DELTA, beliefs, M)
    T = np.atleast_1d(estimate_T(sample, beliefs, spec, kernel, h, u_star))
    S0 = estimate_S(sample, beliefs, spec, 0.0)
    out = T - S0
    return float(out[0]) if np.ndim(u_star) == 0 else out


def revenue_delta_curve(v_est: ValueQuantileEstimate, tau: float | None = None, M: int | None = None) -> CounterfactualCurve:
    spec = make_spec(CounterfactualKind.REVENUE_DELTA, v_est.beliefs, M)
    rev = counterfactual_curve(v_est, spec, tau, estimator="T")
    S0 = estimate_S(v_est.sample, v_est.beliefs, spec, 0.0)
    return CounterfactualCurve("Delta", rev.grid, rev.values - S0, "T", bandwidth=v_est.h)


def _bid_nodes(v, u_star, u, resolution):
    if isinstance(v, ValueQuantileEstimate):
        inner = v.grid[(v.grid > u_star) & (v.grid < u)]
        nodes = np.concatenate([[u_star], inner, [u]]) if u > u_star else np.array([u_star])
        vf = lambda z: np.interp(z, v.grid, v.v_hat)  # noqa: E731
    else:
        cells = max(1, int(math.ceil((u - u_star) * resolution)))
        nodes = np.linspace(u_star, u, cells + 1) if u > u_star else np.array([u_star])
        vf = v
    return nodes, vf


def optimal_bid_curve(v, beliefs: BeliefFunctions, u_star: float, u_max: float = 1.0, resolution: int = 10_000):
    """Equilibrium bids under exclusion level u* for every node in [u*, u_max].

    ``v`` is a :class:`ValueQuantileEstimate` (cells follow its grid) or a
    callable value quantile (uniform cells at ``resolution``). Returns
    ``(nodes, bids)``. Each cell contributes its exact A1 increment times v at
    the cell midpoint, so the bid stays a weighted average of values.
    """
    if not (0 <= u_star <= u_max <= 1):
        raise DomainError("need 0 <= u* <= u <= 1")
    nodes, vf = _bid_nodes(v, u_star, u_max, resolution)
    A1 = beliefs.A1(nodes)
    head = A1[0] * float(vf(np.asarray(u_star)))
    if nodes.size > 1:
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        acc = np.concatenate([[0.0], np.cumsum(np.diff(A1) * vf(mids))])
    else:
        acc = np.zeros(1)
    with np.errstate(divide="ignore", invalid="ignore"):
        bids = (head + acc) / A1
    if np.any(A1 == 0):
        zero = A1 == 0
        if np.any(nodes[zero] > u_star) or u_star > 0:
            raise SingularityError("A1(u) = 0: winning probability vanishes")
        bids[zero] = float(vf(np.asarray(u_star)))
    return nodes, bids


def optimal_bid(v, beliefs: BeliefFunctions, u_star: float, u: float, resolution: int = 10_000) -> float:
    """Optimal bid of the bidder at value rank u when the exclusion level is u*."""
    if u < u_star:
        raise DomainError("u must be >= u*")
    if beliefs.A1(u) == 0:
        if u == u_star:
            vf = v.at if isinstance(v, ValueQuantileEstimate) else v
            return float(vf(u))
        raise SingularityError("A1(u) = 0: winning probability vanishes")
    _, bids = optimal_bid_curve(v, beliefs, u_star, u, resolution)
    return float(bids[-1])


def participation_probability(beliefs: BeliefFunctions, M: int | None = None, m: int = 0, u_star: float = 0.0) -> float:
    """Probability of m active bidders once levels below u* are excluded."""
    M = beliefs.M if M is None else int(M)
    if not (0 <= m <= M):
        raise DomainError(f"m must lie in 0..{M}")
    if not (0.0 <= u_star <= 1.0):
        raise DomainError("u* must lie in [0, 1]")
    total = 0.0
    p = beliefs.p_check
    for i in range(max(m, 1), M + 1):
        pi = p[i - 1] if i - 1 < p.size else 0.0
        total += pi * math.comb(i, m) * (1.0 - u_star) ** m * u_star ** (i - m)
    return total


def _tail_integral(f, u, resolution: int):
    """int_u^1 f by the midpoint rule on cells of width 1/resolution."""
    R = int(resolution)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    mids = (np.arange(R) + 0.5) / R
    cells = f(mids) / R
    tail = np.zeros(R + 1)
    tail[:-1] = np.cumsum(cells[::-1])[::-1]
    k = np.minimum(floor_index(R * u), R)
    kk = np.minimum(k, R - 1)
    right = (kk + 1) / R
    part = np.where(k < R, f(0.5 * (u + right)) * (right - u), 0.0)
    return part + tail[np.minimum(k + 1, R)]


def population_counterfactual(spec: CounterfactualSpec, v: Callable, u_star, resolution: int = 10_000):
    """T(u*) from a known value quantile function, by midpoint quadrature."""
    u = np.atleast_1d(np.asarray(u_star, dtype=float))
    out = spec.phi(u) * v(u) + _tail_integral(lambda z: spec.psi(z) * v(z), u, resolution)
    return float(out[0]) if np.ndim(u_star) == 0 else out


def population_delta(beliefs: BeliefFunctions, v: Callable, u_star, resolution: int = 10_000, M: int | None = None):
    """phi(u*) v(u*) - int_0^{u*} psi v for the revenue pair."""
    spec = make_spec(CounterfactualKind.REVENUE_DELTA, beliefs, M)
    u = np.atleast_1d(np.asarray(u_star, dtype=float))
    f = lambda z: spec.psi(z) * v(z)  # noqa: E731
    head = _tail_integral(f, np.zeros(1), resolution)[0] - _tail_integral(f, u, resolution)
    out = spec.phi(u) * v(u) - head
    return float(out[0]) if np.ndim(u_star) == 0 else out
