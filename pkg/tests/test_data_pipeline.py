import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from auctionfolio.auction_model import beliefs_from_probabilities, value_quantile
from auctionfolio.data_pipeline import (
    BIDS_ONLY_SCHEMA,
    AuctionRecord,
    CsvSchema,
    Formula,
    auction_counts,
    load_csv,
    read_residuals,
    residualize,
    select_subsample,
    truncate_tails,
    write_manifest,
    write_residuals,
)
from auctionfolio.errors import CollinearityError, ConfigError, EmptySubsampleError, SchemaError
from auctionfolio.quantile_core import EPANECHNIKOV

HEADER = ["auction_id", "bid", "n_bidders", "year", "location", "log_adv_value", "log_hhi"]


def write_rows(path, rows, header=HEADER):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def make_records(n_auctions=300, seed=0, sizes=(2, 3, 5, 9, 12)):
    """Auctions with every bidder observed; log bids depend on covariates."""
    rng = np.random.default_rng(seed)
    recs = []
    for a in range(n_auctions):
        m = int(rng.choice(sizes))
        year = str(1980 + a % 4)
        loc = "ABC"[a % 3]
        x1, x2 = rng.normal(), rng.normal()
        for _ in range(m):
            lb = 1.0 + 0.3 * x1 - 0.2 * x2 + 0.1 * (a % 4) + rng.normal(scale=0.4)
            recs.append(AuctionRecord(f"a{a}", math.exp(lb), m, {"log_adv_value": x1, "log_hhi": x2}, {"year": year, "location": loc}))
    return recs


# --- loading ----------------------------------------------------------------------


def test_three_row_fixture(tmp_path):
    p = write_rows(
        tmp_path / "a.csv",
        [["1", "10.5", "2", "1990", "R1", "3.2", "0.4"], ["1", "12.0", "2", "1990", "R1", "3.2", "0.4"], ["2", "7.25", "3", "1991", "R2", "2.9", "0.5"]],
    )
    recs = load_csv(p)
    assert len(recs) == 3
    assert recs[2].bid == 7.25 and recs[2].n_bidders == 3
    assert recs[0].categorical == {"year": "1990", "location": "R1"}
    assert recs[1].numeric["log_hhi"] == 0.4
    assert recs[0].categorical["year"] is recs[1].categorical["year"]


def test_negative_bid_rejected_with_line(tmp_path):
    p = write_rows(tmp_path / "a.csv", [["1", "10", "2", "1990", "R1", "3", "0.4"], ["1", "-1", "2", "1990", "R1", "3", "0.4"]])
    with pytest.raises(SchemaError) as err:
        load_csv(p)
    assert err.value.row_errors[0][0] == 3
    assert "positive" in err.value.row_errors[0][1]


def test_all_row_errors_collected(tmp_path):
    p = write_rows(
        tmp_path / "a.csv",
        [["1", "abc", "2", "1990", "R1", "3", "0.4"], ["2", "5", "x", "1990", "", "3", "0.4"], ["3", "5", "2", "1990", "R1", "nan", "0.4"]],
    )
    with pytest.raises(SchemaError) as err:
        load_csv(p)
    lines = sorted({line for line, _ in err.value.row_errors})
    assert lines == [2, 3, 4]
    assert len(err.value.row_errors) == 4


def test_missing_column(tmp_path):
    p = write_rows(tmp_path / "a.csv", [["1", "10", "2"]], header=["auction_id", "bid", "n_bidders"])
    with pytest.raises(SchemaError, match="log_adv_value"):
        load_csv(p)
    assert len(load_csv(p, BIDS_ONLY_SCHEMA)) == 1


def test_custom_column_names(tmp_path):
    p = write_rows(tmp_path / "a.csv", [["7", "3.5", "2"]], header=["sale", "amount", "bidders"])
    recs = load_csv(p, CsvSchema("sale", "amount", "bidders", (), ()))
    assert recs[0].auction_id == "7" and recs[0].bid == 3.5


def test_inconsistent_bidder_counts(tmp_path):
    p = write_rows(tmp_path / "a.csv", [["1", "10", "2"], ["1", "11", "3"]], header=["auction_id", "bid", "n_bidders"])
    with pytest.raises(SchemaError, match="inconsistent"):
        load_csv(p, BIDS_ONLY_SCHEMA)


def test_more_bids_than_bidders():
    recs = [AuctionRecord("1", 1.0, 2), AuctionRecord("1", 2.0, 2), AuctionRecord("1", 3.0, 2)]
    with pytest.raises(SchemaError):
        auction_counts(recs)


def test_mixed_auction_sizes():
    recs = [AuctionRecord("a", 1.0, 2), AuctionRecord("b", 1.0, 4), AuctionRecord("a", 2.0, 2), AuctionRecord("c", 1.0, 3)]
    c = auction_counts(recs)
    np.testing.assert_array_equal(c.counts_per_auction, [2, 4, 3])
    assert c.M == 4


# --- subsamples -------------------------------------------------------------------------


def test_subsample_ranges():
    recs = make_records(200, 1)
    two = select_subsample(recs, (2, 2))
    assert {r.n_bidders for r in two.records} == {2} and two.M == 2
    most = select_subsample(recs, (2, 9))
    assert {r.n_bidders for r in most.records} == {2, 3, 5, 9} and most.M == 9
    with pytest.raises(ConfigError):
        select_subsample(recs, (5, 4))
    with pytest.raises(ConfigError):
        select_subsample(recs, (1, 4))
    with pytest.raises(EmptySubsampleError):
        select_subsample(recs, (6, 8))


# --- truncation -----------------------------------------------------------------------------


@given(st.integers(21, 2000), st.integers(0, 10_000))
def test_truncation_drops_exact_counts(N, seed):
    x = np.random.default_rng(seed).integers(0, 5, N).astype(float)  # many ties
    keep = truncate_tails(x, 0.05)
    k = math.ceil(0.05 * N)
    assert keep.sum() == N - 2 * k
    order = np.argsort(x, kind="stable")
    assert not keep[order[:k]].any() and not keep[order[N - k :]].any()
    assert keep[order[k : N - k]].all()


def test_truncation_too_aggressive():
    with pytest.raises(EmptySubsampleError):
        truncate_tails(np.arange(3.0), 0.5)


# --- residualization --------------------------------------------------------------------------


def test_covariate_free_geometric_mean_one():
    recs = make_records(150, 2)
    rs = residualize(recs, Formula())
    assert abs(np.mean(np.log(rs.residuals_full))) < 1e-10
    y = np.log([r.bid for r in recs])
    np.testing.assert_allclose(np.log(rs.residuals_full), y - y.mean(), atol=1e-12)


def test_known_coefficients_recovered():
    rng = np.random.default_rng(3)
    N = 500
    x = rng.normal(size=N)
    X = np.column_stack([np.ones(N), x])
    z = rng.normal(scale=0.3, size=N)
    e = z - X @ np.linalg.lstsq(X, z, rcond=None)[0] + 0.17  # orthogonal to x, nonzero mean
    lb = 2 + 0.5 * x + e
    recs = [AuctionRecord(str(i), math.exp(lb[i]), 2, {"x": x[i]}, {}) for i in range(N)]
    rs = residualize(recs, Formula(numeric=("x",)))
    np.testing.assert_allclose(rs.residuals_full, np.exp(e - e.mean()), rtol=0, atol=1e-8)
    assert rs.coef["x"] == pytest.approx(0.5, abs=1e-10)
    assert rs.coef["(intercept)"] == pytest.approx(2.17, abs=1e-10)


def test_residual_sample_shape():
    recs = make_records(300, 4)
    rs = residualize(recs, Formula(("log_adv_value", "log_hhi"), ("year", "location")))
    N = len(recs)
    k = math.ceil(0.05 * N)
    assert rs.sample.n == N - 2 * k == len(rs.auction_ids)
    assert rs.dropped == 2 * k
    assert np.all(np.diff(rs.sample.bids_sorted) >= 0)
    assert rs.bounds == (rs.sample.bids_sorted[0], rs.sample.bids_sorted[-1])
    assert "year[1981]" in rs.coef and "year[1980]" not in rs.coef
    assert 0 < rs.r2 < 1
    assert set(rs.common) == {r.auction_id for r in recs}


def test_subsample_truncation_modes():
    recs = make_records(300, 5)
    f = Formula(("log_adv_value",), ())
    pooled = residualize(recs, f, bidder_range=(2, 3))
    sub = residualize(recs, f, bidder_range=(2, 3), truncation="subsample")
    n_sel = sum(2 <= r.n_bidders <= 3 for r in recs)
    assert sub.sample.n == n_sel - 2 * math.ceil(0.05 * n_sel)
    assert pooled.counts.M == sub.counts.M == 3
    assert set(pooled.counts.counts_per_auction) <= {2, 3}
    with pytest.raises(ConfigError):
        residualize(recs, f, truncation="winsor")


def test_rescaling_bids_leaves_estimates_unchanged():
    recs = make_records(250, 6)
    scaled = [AuctionRecord(r.auction_id, 37.5 * r.bid, r.n_bidders, r.numeric, r.categorical) for r in recs]
    f = Formula(("log_adv_value", "log_hhi"), ("year", "location"))
    a, b = residualize(recs, f), residualize(scaled, f)
    beliefs = beliefs_from_probabilities([0, 0.5, 0.5])
    va = value_quantile(a.sample, beliefs, EPANECHNIKOV, 0.05).v_hat
    vb = value_quantile(b.sample, beliefs, EPANECHNIKOV, 0.05).v_hat
    assert np.max(np.abs(va - vb)) < 1e-10


def test_collinearity_names_columns():
    recs = make_records(100, 7)
    dup = [AuctionRecord(r.auction_id, r.bid, r.n_bidders, {**r.numeric, "twice": 2 * r.numeric["log_adv_value"]}, r.categorical) for r in recs]
    with pytest.raises(CollinearityError) as err:
        residualize(dup, Formula(("log_adv_value", "twice"), ("year",)))
    assert err.value.columns == ["twice"]


def test_collinear_categoricals():
    # location is a function of year here, so its dummies are redundant
    recs = [
        AuctionRecord(str(i), 1.0 + i, 2, {}, {"year": str(i % 3), "location": "xyz"[i % 3]}) for i in range(30)
    ]
    with pytest.raises(CollinearityError) as err:
        residualize(recs, Formula((), ("year", "location")))
    assert err.value.columns == ["location[y]", "location[z]"]


# --- output -----------------------------------------------------------------------------------


def test_residual_round_trip_bitwise(tmp_path):
    rs = residualize(make_records(200, 8), Formula(("log_adv_value",), ("location",)))
    write_residuals(rs, tmp_path / "r.csv")
    ids, vals = read_residuals(tmp_path / "r.csv")
    assert ids == rs.auction_ids
    assert vals.tobytes() == np.asarray(rs.residuals, dtype=float).tobytes()
    write_manifest(rs, tmp_path / "m.json")
    m = json.loads((tmp_path / "m.json").read_text())
    assert m["formula"] == {"numeric": ["log_adv_value"], "categorical": ["location"]}
    assert m["dropped_rows"] == rs.dropped and m["n_kept"] == rs.sample.n
