import numpy as np
import pytest
from hypothesis import settings

from auctionfolio.auction_model import beliefs_from_probabilities
from auctionfolio.quantile_core import BidSample

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture
def two_bidders():
    return beliefs_from_probabilities([0.0, 1.0])


@pytest.fixture
def mixed_beliefs():
    return beliefs_from_probabilities([0.1, 0.3, 0.4, 0.2])


def uniform_sample(n, seed, scale=1.0):
    return BidSample.from_bids(scale * np.random.default_rng(seed).random(n))


def random_beliefs(rng, M=None):
    M = M or int(rng.integers(2, 6))
    p = rng.random(M)
    p[1:] += 0.05  # keep some mass on m >= 2
    return beliefs_from_probabilities(p / p.sum())


# --- acceptance summary -----------------------------------------------------------

_ACCEPTANCE: dict = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    _ACCEPTANCE[props["criterion"]] = ("PASS" if report.passed else "FAIL", props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        verdict, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {verdict}  {detail}")
