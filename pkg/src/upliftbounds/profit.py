"""Campaign economics from uplift and persuadable estimates.

Amounts are plain floats in the currency of ``value``/``cost``. Products are
formed on the decimal representation of the inputs, so published figures
such as a 0.82% uplift give round results instead of binary-float residue.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal

from .core import DomainError, Interval, Quantity, check_probability


def _dec(x) -> Decimal:
    return Decimal(repr(float(x))) if not isinstance(x, int) else Decimal(x)


def realized_profit(n: int, uplift: float, value: float, cost: float) -> float:
    """Profit of contacting ``n`` customers: ``n * uplift * value - n * cost``."""
    if n < 0:
        raise DomainError("number of contacted customers must be >= 0")
    n_ = _dec(n)
    return float(n_ * _dec(uplift) * _dec(value) - n_ * _dec(cost))


def _count(population: int, p: float) -> int:
    return int((_dec(population) * _dec(p)).to_integral_value(rounding=ROUND_HALF_EVEN))


def persuadable_counts(population: int, beta_point: float, beta_interval: Interval) -> tuple[int, int, int]:
    """``(point, lower, upper)`` persuadable head counts, rounded half to even."""
    if population < 0:
        raise DomainError("population must be >= 0")
    beta_point = check_probability(beta_point, "beta_point")
    return (
        _count(population, beta_point),
        _count(population, beta_interval.lower),
        _count(population, beta_interval.upper),
    )


def persuadable_profit(n_persuadable: int, value: float, cost: float) -> float:
    """Profit of contacting only persuadables, each of whom is retained."""
    return realized_profit(n_persuadable, 1.0, value, cost)


def profit_range(population: int, beta_interval: Interval, value: float, cost: float) -> tuple[float, float]:
    """Persuadable-only profit at both ends of the beta interval."""
    lo = _count(population, beta_interval.lower)
    hi = _count(population, beta_interval.upper)
    return persuadable_profit(lo, value, cost), persuadable_profit(hi, value, cost)


@dataclass(frozen=True)
class ProfitInputs:
    n_contacted: int
    uplift: float
    value: float
    cost: float
    population_size: int
    beta_interval: Interval
    beta_point: float
    currency: str = "EUR"

    def __post_init__(self):
        if self.value < 0 or self.cost < 0:
            raise DomainError("value and cost must be >= 0")
        if self.n_contacted < 0 or self.population_size < 0:
            raise DomainError("counts must be >= 0")
        if not -1.0 <= self.uplift <= 1.0:
            raise DomainError("uplift must lie in [-1, 1]")
        if Quantity(self.beta_interval.quantity) is not Quantity.BETA:
            raise DomainError("beta_interval must be an interval on beta")


def profit_report(inputs: ProfitInputs) -> dict:
    point, lo, hi = persuadable_counts(inputs.population_size, inputs.beta_point, inputs.beta_interval)
    rng_lo, rng_hi = profit_range(inputs.population_size, inputs.beta_interval, inputs.value, inputs.cost)
    return {
        "currency": inputs.currency,
        "inputs": {
            "n_contacted": inputs.n_contacted,
            "uplift": inputs.uplift,
            "value": inputs.value,
            "cost": inputs.cost,
            "population_size": inputs.population_size,
            "beta_point": inputs.beta_point,
            "beta_interval": inputs.beta_interval.to_dict(),
        },
        "realized_profit": realized_profit(inputs.n_contacted, inputs.uplift, inputs.value, inputs.cost),
        "persuadables": {"point": point, "lower": lo, "upper": hi},
        "persuadable_only_profit": persuadable_profit(point, inputs.value, inputs.cost),
        "persuadable_profit_range": {"lower": rng_lo, "upper": rng_hi},
    }
