"""Bid data ingestion and residualization.

Log bids are regressed on auction characteristics (intercept, numeric
covariates, one dummy per non-baseline categorical level). The
exponentiated residuals form the bid sample; the exponentiated fitted
values are the common component of each auction. Both tails of the
residual distribution are truncated by dropping observations.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .auction_model import AuctionCounts
from .errors import CollinearityError, ConfigError, EmptySubsampleError, SchemaError
from .quantile_core import BidSample

__all__ = [
    "CsvSchema",
    "USFS_SCHEMA",
    "AuctionRecord",
    "Formula",
    "Subsample",
    "ResidualSample",
    "load_csv",
    "auction_counts",
    "select_subsample",
    "residualize",
    "truncate_tails",
    "write_residuals",
    "read_residuals",
    "write_manifest",
]


@dataclass(frozen=True)
class CsvSchema:
    """Column roles of an auction CSV. Extra columns are ignored."""

    auction_id: str = "auction_id"
    bid: str = "bid"
    n_bidders: str = "n_bidders"
    numeric: tuple = ("log_adv_value", "log_hhi")
    categorical: tuple = ("year", "location")

    @property
    def required(self) -> tuple:
        return (self.auction_id, self.bid, self.n_bidders) + tuple(self.numeric) + tuple(self.categorical)


USFS_SCHEMA = CsvSchema()
BIDS_ONLY_SCHEMA = CsvSchema(numeric=(), categorical=())


@dataclass(frozen=True)
class AuctionRecord:
    auction_id: str
    bid: float
    n_bidders: int
    numeric: dict = field(default_factory=dict)
    categorical: dict = field(default_factory=dict)
    line: int = 0


@dataclass(frozen=True)
class Formula:
    """Covariates entering the log-bid regression; an intercept is always added."""

    numeric: tuple = ()
    categorical: tuple = ()

    @classmethod
    def from_schema(cls, schema: CsvSchema) -> "Formula":
        return cls(tuple(schema.numeric), tuple(schema.categorical))

    def to_dict(self) -> dict:
        return {"numeric": list(self.numeric), "categorical": list(self.categorical)}


def load_csv(path, schema: CsvSchema = USFS_SCHEMA) -> list[AuctionRecord]:
    """Parse an auction CSV into typed records.

    All row problems are collected and raised together in a
    :class:`SchemaError` whose ``row_errors`` carry line numbers.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in schema.required if c not in header]
        if missing:
            raise SchemaError(f"missing columns: {', '.join(missing)}", [(1, f"missing column {c!r}") for c in missing])
        records, errors = [], []
        levels: dict = {}
        for row in reader:
            line = reader.line_num
            problems = []
            try:
                bid = float(row[schema.bid])
                if not math.isfinite(bid) or bid <= 0:
                    problems.append(f"bid must be positive, got {row[schema.bid]!r}")
            except (TypeError, ValueError):
                problems.append(f"non-numeric bid {row[schema.bid]!r}")
            try:
                m = int(row[schema.n_bidders])
                if m < 1:
                    problems.append(f"n_bidders must be >= 1, got {m}")
            except (TypeError, ValueError):
                problems.append(f"non-integer n_bidders {row[schema.n_bidders]!r}")
            numeric = {}
            for c in schema.numeric:
                try:
                    numeric[c] = float(row[c])
                    if not math.isfinite(numeric[c]):
                        raise ValueError
                except (TypeError, ValueError):
                    problems.append(f"non-numeric {c} {row[c]!r}")
            categorical = {}
            for c in schema.categorical:
                val = (row[c] or "").strip()
                if not val:
                    problems.append(f"empty {c}")
                categorical[c] = levels.setdefault(val, sys.intern(val))
            aid = (row[schema.auction_id] or "").strip()
            if not aid:
                problems.append("empty auction_id")
            if problems:
                errors.extend((line, p) for p in problems)
                continue
            records.append(AuctionRecord(sys.intern(aid), bid, m, numeric, categorical, line))
    if errors:
        raise SchemaError(f"{len(errors)} invalid row entries in {path}", errors)
    auction_counts(records)  # consistency check
    return records


def auction_counts(records, M: int | None = None) -> AuctionCounts:
    """Bidder count of each auction, in first-appearance order.

    Every row of an auction must report the same ``n_bidders``, and an
    auction cannot have more bid rows than bidders.
    """
    seen: dict = {}
    rows: dict = {}
    errors = []
    for r in records:
        if r.auction_id in seen and seen[r.auction_id] != r.n_bidders:
            errors.append((r.line, f"auction {r.auction_id}: n_bidders {r.n_bidders} != {seen[r.auction_id]}"))
        seen.setdefault(r.auction_id, r.n_bidders)
        rows[r.auction_id] = rows.get(r.auction_id, 0) + 1
    for aid, k in rows.items():
        if k > seen[aid]:
            errors.append((0, f"auction {aid}: {k} bids but n_bidders = {seen[aid]}"))
    if errors:
        raise SchemaError("inconsistent bidder counts", errors)
    if not seen:
        raise EmptySubsampleError("no auctions")
    return AuctionCounts(np.array(list(seen.values()), dtype=np.int64), M)


@dataclass(frozen=True)
class Subsample:
    records: list
    M: int
    bidder_range: tuple


def select_subsample(records, bidder_range) -> Subsample:
    """Auctions with lo <= n_bidders <= hi; M is set to hi."""
    lo, hi = (int(x) for x in bidder_range)
    if lo < 2 or lo > hi:
        raise ConfigError(f"bidder range must satisfy 2 <= lo <= hi, got [{lo}, {hi}]")
    kept = [r for r in records if lo <= r.n_bidders <= hi]
    if not kept:
        raise EmptySubsampleError(f"no auctions with {lo} to {hi} bidders")
    return Subsample(kept, hi, (lo, hi))


def _design(records, formula: Formula):
    cols = [np.ones(len(records))]
    names = ["(intercept)"]
    for c in formula.numeric:
        cols.append(np.array([r.numeric[c] for r in records], dtype=float))
        names.append(c)
    for c in formula.categorical:
        vals = [r.categorical[c] for r in records]
        for lev in sorted(set(vals))[1:]:  # smallest level is the baseline
            cols.append(np.array([v == lev for v in vals], dtype=float))
            names.append(f"{c}[{lev}]")
    return np.column_stack(cols), names


def _collinear_columns(X, names, tol) -> list:
    """Columns that add no rank when appended left to right."""
    bad, keep = [], []
    rank = 0
    for j in range(X.shape[1]):
        trial = keep + [j]
        r = np.linalg.matrix_rank(X[:, trial], tol=tol)
        if r > rank:
            keep, rank = trial, r
        else:
            bad.append(names[j])
    return bad


def truncate_tails(values, fraction: float = 0.05) -> np.ndarray:
    """Boolean mask keeping all but the ceil(fraction N) smallest and largest.

    Order ties are broken by position (stable sort).
    """
    values = np.asarray(values, dtype=float)
    N = values.size
    k = math.ceil(fraction * N - 1e-12)
    if 2 * k >= N:
        raise EmptySubsampleError(f"truncating {k} from each tail leaves nothing of {N}")
    order = np.argsort(values, kind="stable")
    mask = np.ones(N, dtype=bool)
    if k:
        mask[order[:k]] = False
        mask[order[N - k :]] = False
    return mask


@dataclass(frozen=True, eq=False)
class ResidualSample:
    """Exponentiated log-bid residuals after tail truncation."""

    sample: BidSample
    counts: AuctionCounts
    auction_ids: tuple  # per kept residual, in input order
    residuals: np.ndarray  # kept, in input order
    residuals_full: np.ndarray  # before truncation, in input order
    common: dict  # auction_id -> exponentiated fitted value
    bounds: tuple  # (lowest kept, highest kept)
    dropped: int
    coef: dict
    r2: float
    formula: Formula

    def manifest(self) -> dict:
        return {
            "formula": self.formula.to_dict(),
            "coefficients": self.coef,
            "r2": self.r2,
            "n_rows": int(self.residuals_full.size),
            "n_kept": int(self.residuals.size),
            "dropped_rows": self.dropped,
            "truncation_bounds": list(self.bounds),
            "n_auctions": self.counts.L,
            "M": self.counts.M,
        }


def residualize(
    records,
    formula: Formula | None = None,
    fraction: float = 0.05,
    bidder_range=None,
    truncation: str = "pooled",
    tol: float | None = None,
) -> ResidualSample:
    """Least-squares residualization of log bids, exponentiation, truncation.

    The fit uses all ``records``. With ``bidder_range`` the result is then
    restricted to that subsample; ``truncation="pooled"`` computes the
    truncation on all residuals first, ``"subsample"`` within the subsample.
    """
    records = list(records)
    if not records:
        raise EmptySubsampleError("no records")
    formula = formula or Formula()
    if truncation not in ("pooled", "subsample"):
        raise ConfigError("truncation must be 'pooled' or 'subsample'")
    X, names = _design(records, formula)
    y = np.log(np.array([r.bid for r in records]))
    tol = tol if tol is not None else max(X.shape) * np.finfo(float).eps * np.abs(X).max()
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X, tol=tol) < X.shape[1]:
        bad = _collinear_columns(X, names, tol) or names[X.shape[0] :]
        raise CollinearityError(f"design matrix is rank deficient; drop one of: {', '.join(bad)}", bad)
    Qm, R = np.linalg.qr(X)
    beta = np.linalg.solve(R, Qm.T @ y)
    fitted = X @ beta
    resid = y - fitted
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 0.0
    e = np.exp(resid)
    common = {}
    for r, f in zip(records, fitted):
        common.setdefault(r.auction_id, float(np.exp(f)))

    M = None
    sel = np.ones(len(records), dtype=bool)
    if bidder_range is not None:
        sub = select_subsample(records, bidder_range)
        M = sub.M
        lo, hi = sub.bidder_range
        sel = np.array([lo <= r.n_bidders <= hi for r in records])
    if truncation == "pooled":
        keep = truncate_tails(e, fraction) & sel
    else:
        keep = np.zeros_like(sel)
        keep[np.flatnonzero(sel)[truncate_tails(e[sel], fraction)]] = True
    kept_records = [r for r, k in zip(records, keep) if k]
    if not kept_records:
        raise EmptySubsampleError("truncation removed every observation")
    kept = e[keep]
    counts = auction_counts([r for r, s in zip(records, sel) if s], M)
    return ResidualSample(
        sample=BidSample.from_bids(kept),
        counts=counts,
        auction_ids=tuple(r.auction_id for r in kept_records),
        residuals=kept,
        residuals_full=e,
        common=common,
        bounds=(float(kept.min()), float(kept.max())),
        dropped=int(sel.sum() - keep.sum()),
        coef={n: float(b) for n, b in zip(names, beta)},
        r2=r2,
        formula=formula,
    )


def write_residuals(rs: ResidualSample, path) -> None:
    """CSV with columns auction_id, residual; floats written with repr."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["auction_id", "residual"])
        for aid, x in zip(rs.auction_ids, rs.residuals):
            w.writerow([aid, repr(float(x))])


def read_residuals(path) -> tuple[tuple, np.ndarray]:
    """Inverse of :func:`write_residuals`: (auction_ids, residuals)."""
    ids, vals, errors = [], [], []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["auction_id", "residual"]:
            raise SchemaError("residual CSV must have columns auction_id, residual")
        for row in reader:
            try:
                vals.append(float(row["residual"]))
                ids.append(row["auction_id"])
            except (TypeError, ValueError):
                errors.append((reader.line_num, f"non-numeric residual {row['residual']!r}"))
    if errors:
        raise SchemaError("invalid residual rows", errors)
    return tuple(ids), np.array(vals)


def write_manifest(rs: ResidualSample, path) -> None:
    Path(path).write_text(json.dumps(rs.manifest(), sort_keys=True, indent=2) + "\n")
