"""Participation beliefs and the value quantile estimator.

With p_m the probability of facing m active bidders,

    A1(u) = sum_m p_m u^(m-1),   A2 = u A1,   A3 = (1 - u) A1,
    A = A1 / A1',                a = (1/M) sum_m m p_m,

and the value quantile is v(u) = Q(u) + A(u) q(u). Every member and every
derivative is evaluated from exact polynomial coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DegenerateSampleError, DomainError, SingularityError
from .quantile_core import (
    EPANECHNIKOV,
    BidSample,
    Bandwidth,
    Kernel,
    QuantileEstimates,
    compute_spacings,
    empirical_quantile,
    kernel_quantile_density,
    quantile_density_direct,
)

__all__ = [
    "AuctionCounts",
    "BeliefFunctions",
    "ValueQuantileEstimate",
    "estimate_beliefs",
    "beliefs_from_probabilities",
    "eval_A",
    "value_quantile",
]


@dataclass(frozen=True)
class AuctionCounts:
    """Number of active bidders in each auction.

    ``M`` defaults to the largest observed count.
    """

    counts_per_auction: np.ndarray
    M: int | None = None

    def __post_init__(self):
        c = np.asarray(self.counts_per_auction)
        if c.ndim != 1 or c.size < 1:
            raise DomainError("need at least one auction")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(c == np.round(c)):
                raise DomainError("bidder counts must be integers")
            c = c.astype(np.int64)
        if np.any(c < 1):
            raise DomainError("bidder counts must be >= 1")
        M = int(c.max()) if self.M is None else int(self.M)
        if M < int(c.max()):
            raise DomainError(f"M = {M} is below the largest observed count {int(c.max())}")
        object.__setattr__(self, "counts_per_auction", c)
        object.__setattr__(self, "M", M)

    @property
    def L(self) -> int:
        return int(self.counts_per_auction.size)

    @property
    def n_bids(self) -> int:
        return int(self.counts_per_auction.sum())


def _poly(coeffs) -> Polynomial:
    return Polynomial(np.asarray(coeffs, dtype=float))


@dataclass(frozen=True, eq=False)
class BeliefFunctions:
    """Plug-in participation beliefs and the derived A-family.

    ``p_check[m - 1]`` is the frequency of auctions with m bidders.
    """

    p_check: np.ndarray
    M: int
    a_check: float
    A1_poly: Polynomial
    A2_poly: Polynomial
    A3_poly: Polynomial
    # A = num / den after cancelling the common power of u in A1 and A1'
    A_num: Polynomial
    A_den: Polynomial

    @classmethod
    def from_probabilities(cls, p, M: int | None = None) -> "BeliefFunctions":
        p = np.asarray(p, dtype=float)
        if M is None:
            M = p.size
        if p.size < M:
            p = np.concatenate([p, np.zeros(M - p.size)])
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("beliefs must be nonnegative and sum to one")
        if p[1:].sum() <= 0:
            raise DegenerateSampleError("degenerate beliefs: no auction has two or more bidders")
        A1 = _poly(p)
        A2 = Polynomial([0.0, 1.0]) * A1
        A3 = Polynomial([1.0, -1.0]) * A1
        m0 = int(np.flatnonzero(p > 0)[0]) + 1
        if m0 == 1:
            num, den = A1, A1.deriv()
        else:
            R = _poly(p[m0 - 1 :])
            num = Polynomial([0.0, 1.0]) * R
            den = (m0 - 1) * R + Polynomial([0.0, 1.0]) * R.deriv()
        a = float(np.dot(np.arange(1, M + 1), p) / M)
        return cls(p, int(M), a, A1, A2, A3, num, den)

    # polynomial members
    def A1(self, u):
        return self.A1_poly(u)

    def dA1(self, u):
        return self.A1_poly.deriv()(u)

    def d2A1(self, u):
        return self.A1_poly.deriv(2)(u)

    def A2(self, u):
        return self.A2_poly(u)

    def dA2(self, u):
        return self.A2_poly.deriv()(u)

    def d2A2(self, u):
        return self.A2_poly.deriv(2)(u)

    def A3(self, u):
        return self.A3_poly(u)

    def dA3(self, u):
        return self.A3_poly.deriv()(u)

    def d2A3(self, u):
        return self.A3_poly.deriv(2)(u)

    # rational members
    def _den(self, u):
        d = self.A_den(u)
        if np.any(d == 0):
            raise SingularityError("A1'(u) vanishes; A(u) is undefined there")
        return d

    def A(self, u):
        d = self._den(u)
        return self.A_num(u) / d

    def dA(self, u):
        d = self._den(u)
        return (self.A_num.deriv()(u) * d - self.A_num(u) * self.A_den.deriv()(u)) / d**2

    def participation_rate(self) -> float:
        return self.a_check


def estimate_beliefs(counts: AuctionCounts) -> BeliefFunctions:
    """Empirical frequencies p_m of auctions with m bidders, m = 1..M."""
    M = counts.M
    L = counts.L
    tally = np.bincount(counts.counts_per_auction, minlength=M + 1)[1 : M + 1]
    if tally[1:].sum() == 0:
        raise DegenerateSampleError("degenerate beliefs: every auction has a single bidder")
    exact = [Fraction(int(t), L) for t in tally]
    p = np.array([float(f) for f in exact])
    return BeliefFunctions.from_probabilities(p, M)


def beliefs_from_probabilities(p, M: int | None = None) -> BeliefFunctions:
    return BeliefFunctions.from_probabilities(p, M)


_MEMBERS = {
    "A1": "A1",
    "A1'": "dA1",
    "A2": "A2",
    "A2'": "dA2",
    "A3": "A3",
    "A3'": "dA3",
    "A": "A",
    "A'": "dA",
}


def eval_A(beliefs: BeliefFunctions, which: str, u):
    """Evaluate one member of the A-family: A1, A1', A2, A2', A3, A3', A, A'."""
    key = which.replace("′", "'")
    if key not in _MEMBERS:
        raise DomainError(f"unknown member {which!r}; choose from {list(_MEMBERS)}")
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr < 0) | (u_arr > 1)):
        raise DomainError("u must lie in [0, 1]")
    out = getattr(beliefs, _MEMBERS[key])(u_arr)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class ValueQuantileEstimate:
    """v_h(u) = Q(u) + A(u) q_h(u) on the grid j/n, j = 1..n-1."""

    grid: np.ndarray
    Q_hat: np.ndarray
    v_hat: np.ndarray
    estimates: QuantileEstimates
    beliefs: BeliefFunctions
    sample: BidSample
    kernel: Kernel

    @property
    def q_hat(self) -> np.ndarray:
        return self.estimates.q_hat

    @property
    def h(self) -> float:
        return self.estimates.h

    @property
    def n(self) -> int:
        return self.sample.n

    def at(self, u):
        """v_h at arbitrary levels (direct summation off the grid)."""
        u_arr = np.atleast_1d(np.asarray(u, dtype=float))
        q = quantile_density_direct(np.diff(self.sample.bids_sorted), self.kernel, self.h, u_arr)
        out = np.atleast_1d(empirical_quantile(self.sample, u_arr)) + self.beliefs.A(u_arr) * q
        return float(out[0]) if np.ndim(u) == 0 else out


def value_quantile(
    sample: BidSample,
    beliefs: BeliefFunctions,
    kernel: Kernel = EPANECHNIKOV,
    h=None,
    trim: float = 0.0,
) -> ValueQuantileEstimate:
    """Value quantile estimate on the canonical grid."""
    est = kernel_quantile_density(compute_spacings(sample), kernel, h, trim=trim)
    grid = est.grid
    Q = sample.bids_sorted[1:]  # Q(j/n) = b_(j+1)
    v = Q + beliefs.A(grid) * est.q_hat
    return ValueQuantileEstimate(grid, Q, v, est, beliefs, sample, kernel)
