import pytest
from hypothesis import given
from hypothesis import strategies as st

from upliftbounds.core import DomainError, Interval, Quantity
from upliftbounds.profit import (
    ProfitInputs,
    persuadable_counts,
    persuadable_profit,
    profit_range,
    profit_report,
    realized_profit,
)


def beta(lo, hi):
    return Interval(lo, hi, Quantity.BETA)


def test_realized_profit_examples():
    assert realized_profit(0, 0.3, 120, 1) == 0
    assert realized_profit(7500, 0.0082, 120, 1) == -120
    assert persuadable_profit(483, 120, 1) == 57477
    assert realized_profit(483, 1.0, 120, 1) == 57477


def test_persuadable_counts_examples():
    assert persuadable_counts(11268, 0.0429, beta(0.0052, 0.0449)) == (483, 59, 506)
    assert persuadable_counts(0, 0.3, beta(0.1, 0.9)) == (0, 0, 0)
    assert persuadable_counts(1000, 0.5, beta(0.25, 0.75)) == (500, 250, 750)


def test_counts_round_half_to_even():
    assert persuadable_counts(10, 0.25, beta(0.05, 0.35)) == (2, 0, 4)


def test_profit_range_examples():
    assert profit_range(11268, beta(0.0052, 0.0449), 120, 1) == (7021, 60214)
    assert profit_range(11268, beta(0.0, 0.0), 120, 1) == (0, 0)
    assert profit_range(500, beta(0.1, 0.4), 5, 5) == (0, 0)


@given(st.integers(0, 10**6), st.floats(0, 1000), st.floats(0, 100))
def test_zero_uplift_costs_contacts(n, value, cost):
    assert realized_profit(n, 0.0, value, cost) == pytest.approx(-n * cost)


@given(st.integers(0, 10**5), st.floats(0, 1), st.floats(0, 500), st.floats(0, 50))
def test_linear_in_n(n, u, value, cost):
    assert realized_profit(2 * n, u, value, cost) == pytest.approx(2 * realized_profit(n, u, value, cost), abs=1e-6)


@given(st.integers(0, 10**5), st.floats(0, 1), st.floats(0, 1), st.floats(0, 500), st.floats(0, 1))
def test_range_ordered_when_value_exceeds_cost(pop, a, b, value, frac):
    lo, hi = sorted((a, b))
    r = profit_range(pop, beta(lo, hi), value, value * frac)
    assert r[0] <= r[1]


@given(st.integers(0, 10**5), st.integers(0, 10**5), st.floats(0, 1), st.floats(0, 1))
def test_counts_monotone(p1, p2, b1, b2):
    (pa, pb), (ba, bb) = sorted((p1, p2)), sorted((b1, b2))
    iv = beta(0.0, 1.0)
    assert persuadable_counts(pa, ba, iv)[0] <= persuadable_counts(pb, ba, iv)[0]
    assert persuadable_counts(pa, ba, iv)[0] <= persuadable_counts(pa, bb, iv)[0]


def test_validation():
    with pytest.raises(DomainError):
        realized_profit(-1, 0.1, 1, 1)
    with pytest.raises(DomainError):
        persuadable_counts(-5, 0.1, beta(0, 0.2))
    with pytest.raises(DomainError):
        ProfitInputs(10, 0.1, -1.0, 1.0, 100, beta(0, 0.1), 0.05)
    with pytest.raises(DomainError):
        ProfitInputs(10, 0.1, 1.0, 1.0, 100, Interval(0, 0.1, Quantity.GAMMA), 0.05)


def test_report_contents():
    rep = profit_report(ProfitInputs(7500, 0.0082, 120.0, 1.0, 11268, beta(0.0052, 0.0449), 0.0429))
    assert rep["realized_profit"] == -120
    assert rep["persuadables"] == {"point": 483, "lower": 59, "upper": 506}
    assert rep["persuadable_only_profit"] == 57477
    assert rep["persuadable_profit_range"] == {"lower": 7021, "upper": 60214}
    assert rep["currency"] == "EUR"
