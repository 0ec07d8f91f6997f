"""Synthetic auction data in the timber-sale CSV layout, and the subsample workflow.

Bidders draw private values uniform on [0, 1] and know only the
distribution p of the number of active bidders. The equilibrium bid
quantile function is then

    Q(u) = sum_m p_m (m - 1)/m u^m / sum_m p_m u^(m - 1),

which solves v(u) = Q(u) + A(u) Q'(u) with v(u) = u. Observed bids are
Q(U) times a multiplicative common component driven by auction covariates,
so residualization recovers the idiosyncratic part.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .auction_model import estimate_beliefs
from .data_pipeline import USFS_SCHEMA, AuctionRecord, Formula, residualize
from .inference import SimConfig, reserve_price_test
from .quantile_core import EPANECHNIKOV, rule_of_thumb_bandwidth

__all__ = ["SUBSAMPLE_RANGES", "equilibrium_bid_quantile", "synthetic_auctions", "write_auctions_csv", "subsample_workflow"]

SUBSAMPLE_RANGES = ((2, 2), (3, 3), (2, 5), (5, 9), (2, 9))

# share of auctions with m = 1..9 bidders
_DEFAULT_P = np.array([0.0, 0.22, 0.18, 0.15, 0.13, 0.11, 0.09, 0.07, 0.05])


def equilibrium_bid_quantile(p, u):
    """Q(u) for uniform values when the number of bidders has distribution p."""
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    m = np.arange(1, p.size + 1)
    num = np.sum(p[:, None] * ((m - 1) / m)[:, None] * u[None, :] ** m[:, None], axis=0)
    den = np.sum(p[:, None] * u[None, :] ** (m - 1)[:, None], axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, 0.0)


def synthetic_auctions(n_auctions: int, seed: int = 0, p=None) -> list[AuctionRecord]:
    """Auctions with every bidder observed and the timber-sale covariates."""
    p = _DEFAULT_P if p is None else np.asarray(p, dtype=float)
    g = rng_mod.stream(seed, 0)
    sizes = g.choice(np.arange(1, p.size + 1), size=n_auctions, p=p / p.sum())
    years = [str(y) for y in range(1982, 1990)]
    locations = ["R1", "R2", "R3", "R4", "R5", "R6"]
    year_fx = {y: 0.04 * k for k, y in enumerate(years)}
    loc_fx = {loc: 0.1 * (k % 3) for k, loc in enumerate(locations)}
    records = []
    for a in range(n_auctions):
        m = int(sizes[a])
        log_adv = float(g.normal(3.0, 0.5))
        log_hhi = float(g.uniform(-1.5, 0.0))
        year = years[int(g.integers(len(years)))]
        loc = locations[int(g.integers(len(locations)))]
        common = math.exp(1.0 + 0.8 * log_adv + 0.3 * log_hhi + year_fx[year] + loc_fx[loc])
        bids = equilibrium_bid_quantile(p, g.uniform(0.02, 1.0, m))  # floor keeps bids positive
        for b in bids:
            records.append(
                AuctionRecord(
                    f"s{a}", common * float(b), m,
                    {"log_adv_value": log_adv, "log_hhi": log_hhi},
                    {"year": year, "location": loc},
                )
            )
    return records


def write_auctions_csv(records, path) -> None:
    """Write records with the default timber-sale column names."""
    s = USFS_SCHEMA
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(s.required))
        for r in records:
            w.writerow(
                [r.auction_id, repr(r.bid), r.n_bidders]
                + [repr(r.numeric[c]) for c in s.numeric]
                + [r.categorical[c] for c in s.categorical]
            )


def subsample_workflow(records, ranges=SUBSAMPLE_RANGES, alpha: float = 0.05, n_sims: int = 1000, seed: int = 0,
                       truncation: str = "pooled") -> list[dict]:
    """Residualize, then run the reserve-price test on each bidder-count subsample."""
    formula = Formula.from_schema(USFS_SCHEMA)
    rows = []
    for k, rng_range in enumerate(ranges):
        rs = residualize(records, formula, bidder_range=rng_range, truncation=truncation)
        beliefs = estimate_beliefs(rs.counts)
        h = rule_of_thumb_bandwidth(rs.sample).h
        res = reserve_price_test(rs.sample, beliefs, EPANECHNIKOV, h, alpha, SimConfig(n_sims=n_sims, seed=seed + k))
        rows.append(
            {
                "bidders": f"{rng_range[0]}" if rng_range[0] == rng_range[1] else f"{rng_range[0]}-{rng_range[1]}",
                "n": rs.sample.n,
                "h": h,
                "optimal_exclusion": res.optimal_exclusion,
                "statistic": res.statistic,
                "reject": res.reject,
            }
        )
    return rows
