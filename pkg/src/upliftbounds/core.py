"""Counterfactual probability types, Fréchet bounds and uplift bounds.

Notation follows the churn setting: ``Y0`` is the outcome without treatment,
``Y1`` the outcome under treatment, and the four counterfactual
probabilities are

    alpha = P(Y0=0, Y1=0)   sure thing
    beta  = P(Y0=1, Y1=0)   persuadable
    gamma = P(Y0=0, Y1=1)   do-not-disturb
    delta = P(Y0=1, Y1=1)   lost cause

Scores are ``s0 = P(Y0=1 | x)`` and ``s1 = P(Y1=1 | x)``. The uplift sign
convention is ``U = s0 - s1`` (positive when treatment *reduces* the
outcome, e.g. churn). Some libraries use ``s1 - s0``; convert before use.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

#: Scores outside [0, 1] by at most this much are snapped to the boundary.
SCORE_SLACK = 1e-9
SIMPLEX_TOL = 1e-9


class DomainError(ValueError):
    """An input lies outside the domain of an operation."""


class Quantity(str, enum.Enum):
    ALPHA = "alpha"
    BETA = "beta"
    GAMMA = "gamma"
    DELTA = "delta"

    @property
    def index(self) -> int:
        return _QUANTITY_INDEX[self]

    @property
    def category(self) -> str:
        return _CATEGORY[self]


QUANTITIES: tuple[Quantity, ...] = tuple(Quantity)
_QUANTITY_INDEX = {q: i for i, q in enumerate(QUANTITIES)}
_CATEGORY = {
    Quantity.ALPHA: "sure thing",
    Quantity.BETA: "persuadable",
    Quantity.GAMMA: "do-not-disturb",
    Quantity.DELTA: "lost cause",
}


def as_quantity(q: Quantity | str) -> Quantity:
    try:
        return Quantity(q.lower() if isinstance(q, str) else q)
    except ValueError:
        raise DomainError(f"unknown counterfactual quantity {q!r}") from None


def check_probability(x: float, name: str = "probability") -> float:
    """Validate a scalar probability, snapping tiny float excursions."""
    x = float(x)
    if math.isnan(x) or x < -SCORE_SLACK or x > 1 + SCORE_SLACK:
        raise DomainError(f"{name}={x!r} is outside [0, 1]")
    return min(max(x, 0.0), 1.0)


def check_probabilities(a, name: str = "scores") -> np.ndarray:
    """Array version of :func:`check_probability`; returns a float copy."""
    arr = np.array(a, dtype=float)
    bad = np.isnan(arr) | (arr < -SCORE_SLACK) | (arr > 1 + SCORE_SLACK)
    if bad.any():
        i = int(np.flatnonzero(bad.ravel())[0])
        raise DomainError(f"{name}[{i}]={arr.ravel()[i]!r} is outside [0, 1]")
    return np.clip(arr, 0.0, 1.0)


@dataclass(frozen=True)
class CounterfactualDistribution:
    """Joint distribution of the potential outcomes (Y0, Y1)."""

    alpha: float
    beta: float
    gamma: float
    delta: float

    def __post_init__(self):
        vals = self.as_tuple()
        for q, v in zip(QUANTITIES, vals):
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise DomainError(f"{q.value}={v!r} is outside [0, 1]")
        total = math.fsum(vals)
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise DomainError(f"components sum to {total!r}, expected 1")

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "CounterfactualDistribution":
        if len(a) != 4:
            raise DomainError(f"expected 4 components, got {len(a)}")
        return cls(*(float(x) for x in a))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha, self.beta, self.gamma, self.delta)

    def __getitem__(self, q: Quantity | str) -> float:
        return self.as_tuple()[as_quantity(q).index]

    def scores(self) -> "ScorePair":
        """Marginal outcome probabilities, s0 = beta + delta, s1 = gamma + delta."""
        return ScorePair(self.beta + self.delta, self.gamma + self.delta)

    def entropy(self) -> float:
        """Shannon entropy in nats, with 0 log 0 = 0."""
        return -math.fsum(p * math.log(p) for p in self.as_tuple() if p > 0)


@dataclass(frozen=True)
class ScorePair:
    s0: float
    s1: float

    def __post_init__(self):
        object.__setattr__(self, "s0", check_probability(self.s0, "s0"))
        object.__setattr__(self, "s1", check_probability(self.s1, "s1"))

    @property
    def uplift(self) -> float:
        return self.s0 - self.s1


class ScoreSet:
    """An immutable, nonempty collection of (s0, s1) score pairs.

    Stored column-wise as two read-only float arrays.
    """

    __slots__ = ("_s0", "_s1")

    def __init__(self, s0, s1):
        a0 = check_probabilities(np.ravel(s0), "s0")
        a1 = check_probabilities(np.ravel(s1), "s1")
        if a0.shape != a1.shape:
            raise DomainError(f"s0 has {a0.size} entries but s1 has {a1.size}")
        if a0.size == 0:
            raise DomainError("a score set must contain at least one pair")
        a0.flags.writeable = False
        a1.flags.writeable = False
        self._s0 = a0
        self._s1 = a1

    @classmethod
    def from_pairs(cls, pairs: Iterable) -> "ScoreSet":
        rows = [(p.s0, p.s1) if isinstance(p, ScorePair) else tuple(p) for p in pairs]
        if not rows:
            raise DomainError("a score set must contain at least one pair")
        arr = np.asarray(rows, dtype=float)
        return cls(arr[:, 0], arr[:, 1])

    @property
    def s0(self) -> np.ndarray:
        return self._s0

    @property
    def s1(self) -> np.ndarray:
        return self._s1

    def __len__(self) -> int:
        return self._s0.size

    def __iter__(self):
        for a, b in zip(self._s0, self._s1):
            yield ScorePair(float(a), float(b))

    def __getitem__(self, i: int) -> ScorePair:
        return ScorePair(float(self._s0[i]), float(self._s1[i]))

    def __repr__(self) -> str:
        return f"ScoreSet(n={len(self)}, mean_s0={self.mean_s0:.4g}, mean_s1={self.mean_s1:.4g})"

    @property
    def mean_s0(self) -> float:
        return float(np.mean(self._s0))

    @property
    def mean_s1(self) -> float:
        return float(np.mean(self._s1))

    def subset(self, idx) -> "ScoreSet":
        return ScoreSet(self._s0[idx], self._s1[idx])


def as_score_set(scores) -> ScoreSet:
    if isinstance(scores, ScoreSet):
        return scores
    if isinstance(scores, np.ndarray) and scores.ndim == 2 and scores.shape[1] == 2:
        return ScoreSet(scores[:, 0], scores[:, 1])
    return ScoreSet.from_pairs(scores)


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    quantity: Quantity

    def __post_init__(self):
        object.__setattr__(self, "quantity", as_quantity(self.quantity))
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise DomainError(
                f"invalid interval [{self.lower!r}, {self.upper!r}] for {self.quantity.value}"
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= x <= self.upper + tol

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper}


def pointwise_bounds(s0, s1) -> tuple[np.ndarray, np.ndarray]:
    """Fréchet lower/upper expressions for all four quantities, elementwise.

    Returns two arrays of shape ``s0.shape + (4,)`` ordered alpha..delta.
    Evaluated at the score means this gives the Fréchet bounds; averaged
    over individuals it gives the uplift bounds.
    """
    s0 = np.asarray(s0, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    r0 = 1.0 - s0
    r1 = 1.0 - s1
    lower = np.stack(
        [
            np.maximum(0.0, r0 - s1),
            np.maximum(0.0, s0 - s1),
            np.maximum(0.0, s1 - s0),
            np.maximum(0.0, s0 - r1),
        ],
        axis=-1,
    )
    upper = np.stack(
        [
            np.minimum(r0, r1),
            np.minimum(s0, r1),
            np.minimum(r0, s1),
            np.minimum(s0, s1),
        ],
        axis=-1,
    )
    return lower, upper


def _interval(lo: float, up: float, q: Quantity) -> Interval:
    # max{0, .} / min{1-., .} are exact, so only the mean can leave [0, 1] and
    # only by an ulp.
    lo = min(max(float(lo), 0.0), 1.0)
    up = min(max(float(up), lo), 1.0)
    return Interval(lo, up, q)


def frechet_bounds(s0_mean: float, s1_mean: float, q: Quantity | str) -> Interval:
    """Distribution-free bounds on one counterfactual probability from the marginals."""
    q = as_quantity(q)
    s0 = check_probability(s0_mean, "s0_mean")
    s1 = check_probability(s1_mean, "s1_mean")
    lo, up = pointwise_bounds(s0, s1)
    return _interval(lo[q.index], up[q.index], q)


def frechet_bounds_all(s0_mean: float, s1_mean: float) -> dict[Quantity, Interval]:
    return {q: frechet_bounds(s0_mean, s1_mean, q) for q in QUANTITIES}


def frechet_span(s0_mean: float, s1_mean: float) -> float:
    s0 = check_probability(s0_mean, "s0_mean")
    s1 = check_probability(s1_mean, "s1_mean")
    return min(s0, s1, 1.0 - s0, 1.0 - s1)


def uplift_bounds_all(scores) -> dict[Quantity, Interval]:
    """Uplift bounds for every quantity: means of the pointwise Fréchet expressions."""
    scores = as_score_set(scores)
    lo, up = pointwise_bounds(scores.s0, scores.s1)
    lo_m = lo.mean(axis=0)
    up_m = up.mean(axis=0)
    return {q: _interval(lo_m[q.index], up_m[q.index], q) for q in QUANTITIES}


def uplift_bounds(scores, q: Quantity | str) -> Interval:
    q = as_quantity(q)
    return uplift_bounds_all(scores)[q]


def uplift_bounds_span(scores) -> float:
    """Width shared by the four uplift intervals, ``E[min{s0, s1, 1-s0, 1-s1}]``."""
    scores = as_score_set(scores)
    s0, s1 = scores.s0, scores.s1
    return float(np.mean(np.minimum(np.minimum(s0, s1), np.minimum(1.0 - s0, 1.0 - s1))))


def _distribution_array(dists) -> np.ndarray:
    if isinstance(dists, CounterfactualDistribution):
        dists = [dists]
    if isinstance(dists, np.ndarray):
        arr = np.asarray(dists, dtype=float)
        if arr.ndim == 1:
            arr = arr[None, :]
    else:
        arr = np.asarray(
            [d.as_tuple() if isinstance(d, CounterfactualDistribution) else tuple(d) for d in dists],
            dtype=float,
        )
    if arr.size == 0:
        raise DomainError("empty collection of distributions")
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise DomainError(f"expected an (n, 4) array of distributions, got shape {arr.shape}")
    if np.isnan(arr).any() or (arr < 0).any() or (arr > 1).any():
        raise DomainError("distribution components must lie in [0, 1]")
    if (np.abs(arr.sum(axis=1) - 1.0) > SIMPLEX_TOL).any():
        raise DomainError("every distribution must sum to 1")
    return arr


def conditional_entropy(dists) -> float:
    """Mean per-individual entropy of (Y0, Y1) in nats."""
    arr = _distribution_array(dists)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(arr > 0, -arr * np.log(arr), 0.0)
    return float(terms.sum(axis=1).mean())
