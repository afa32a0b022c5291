"""Point estimators under conditional independence of Y0 and Y1, and bias diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    QUANTITIES,
    CounterfactualDistribution,
    DomainError,
    Interval,
    Quantity,
    ScoreSet,
    _distribution_array,
    as_score_set,
    frechet_bounds_all,
    pointwise_bounds,
    uplift_bounds_all,
)


@dataclass(frozen=True)
class PointEstimate:
    dist: CounterfactualDistribution
    n_samples: int

    def __getitem__(self, q) -> float:
        return self.dist[q]


def pointwise_products(s0, s1) -> np.ndarray:
    """Per-individual independence products, shape ``(n, 4)`` ordered alpha..delta."""
    s0 = np.asarray(s0, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    r0 = 1.0 - s0
    r1 = 1.0 - s1
    return np.stack([r0 * r1, s0 * r1, r0 * s1, s0 * s1], axis=-1)


def point_estimates(scores) -> PointEstimate:
    """Mean of ``s0 (1 - s1)`` for beta, and the analogous products for the others."""
    scores = as_score_set(scores)
    means = pointwise_products(scores.s0, scores.s1).mean(axis=0)
    # the four means sum to 1 up to rounding; absorb the residue so the
    # result is a valid distribution
    means = np.clip(means, 0.0, 1.0)
    return PointEstimate(CounterfactualDistribution.from_array(means), len(scores))


def midpoint_estimates(scores) -> dict[str, dict[Quantity, float]]:
    """Bound mid-points used as naive point estimators (baseline)."""
    scores = as_score_set(scores)
    ub = uplift_bounds_all(scores)
    fr = frechet_bounds_all(scores.mean_s0, scores.mean_s1)
    return {
        "uplift": {q: ub[q].midpoint for q in QUANTITIES},
        "frechet": {q: fr[q].midpoint for q in QUANTITIES},
    }


def phi_individual(dists) -> np.ndarray:
    """Per-individual deviation from the independence product.

    For one individual with scores s0 = beta + delta, s1 = gamma + delta,
    ``alpha - (1 - s0)(1 - s1)`` reduces to ``alpha*delta - beta*gamma``.
    """
    arr = _distribution_array(dists)
    s0 = arr[:, 1] + arr[:, 3]
    s1 = arr[:, 2] + arr[:, 3]
    return arr[:, 0] - (1.0 - s0) * (1.0 - s1)


def phi_population(dists) -> float:
    """Population ``alpha*delta - beta*gamma - cov(s0, s1)`` with population covariance."""
    arr = _distribution_array(dists)
    a, b, c, d = arr.mean(axis=0)
    s0 = arr[:, 1] + arr[:, 3]
    s1 = arr[:, 2] + arr[:, 3]
    cov = float(np.mean((s0 - s0.mean()) * (s1 - s1.mean())))
    return float(a * d - b * c - cov)


def theoretical_bias(a: float, b: float, c: float, d: float) -> float:
    """Expected phi for individuals drawn from Dirichlet(a, b, c, d): (ad - bc) / (A (A + 1))."""
    w = (a, b, c, d)
    if any(not (x > 0) for x in w):
        raise DomainError(f"Dirichlet weights must be positive, got {w}")
    A = a + b + c + d
    return (a * d - b * c) / (A * (A + 1.0))


@dataclass(frozen=True)
class BiasReport:
    phi_mean: float
    cov_scores: float
    model_cov_term: Optional[float]
    bias_beta: float

    @property
    def biases(self) -> dict[Quantity, float]:
        b = self.bias_beta
        return {Quantity.ALPHA: -b, Quantity.BETA: b, Quantity.GAMMA: b, Quantity.DELTA: -b}

    def to_dict(self) -> dict:
        return {
            "phi_mean": self.phi_mean,
            "cov_scores": self.cov_scores,
            "model_cov_term": self.model_cov_term,
            "bias_beta": self.bias_beta,
        }


def bias_report(dists, model_cov_term: Optional[float] = None) -> BiasReport:
    """Large-sample bias of the point estimators for a known population."""
    arr = _distribution_array(dists)
    s0 = arr[:, 1] + arr[:, 3]
    s1 = arr[:, 2] + arr[:, 3]
    cov = float(np.mean((s0 - s0.mean()) * (s1 - s1.mean())))
    phi = phi_population(arr)
    bias = phi - model_cov_term if model_cov_term is not None else phi
    return BiasReport(phi, cov, model_cov_term, bias)


@dataclass(frozen=True)
class EstimationReport:
    point: PointEstimate
    uplift_intervals: dict[Quantity, Interval]
    frechet_intervals: dict[Quantity, Interval]
    mean_s0: float
    mean_s1: float
    bias: Optional[BiasReport] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.point.n_samples

    @property
    def uplift(self) -> float:
        return self.mean_s0 - self.mean_s1

    def to_dict(self) -> dict:
        out = {
            "n_samples": self.n_samples,
            "mean_s0": self.mean_s0,
            "mean_s1": self.mean_s1,
            "uplift": self.uplift,
            "point": {q.value: self.point[q] for q in QUANTITIES},
            "uplift_bounds": {q.value: self.uplift_intervals[q].to_dict() for q in QUANTITIES},
            "frechet_bounds": {q.value: self.frechet_intervals[q].to_dict() for q in QUANTITIES},
        }
        if self.bias is not None:
            out["bias"] = self.bias.to_dict()
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EstimationReport":
        try:
            point = PointEstimate(
                CounterfactualDistribution(*(d["point"][q.value] for q in QUANTITIES)),
                int(d["n_samples"]),
            )
            ub = {q: Interval(d["uplift_bounds"][q.value]["lower"], d["uplift_bounds"][q.value]["upper"], q) for q in QUANTITIES}
            fr = {q: Interval(d["frechet_bounds"][q.value]["lower"], d["frechet_bounds"][q.value]["upper"], q) for q in QUANTITIES}
        except (KeyError, TypeError) as exc:
            raise DomainError(f"malformed estimation report: missing {exc}") from None
        bias = BiasReport(**d["bias"]) if d.get("bias") else None
        return cls(point, ub, fr, float(d["mean_s0"]), float(d["mean_s1"]), bias, dict(d.get("meta", {})))


def estimation_report(scores, **meta) -> EstimationReport:
    """Point estimates with uplift and Fréchet intervals for all four quantities."""
    scores = as_score_set(scores)
    return EstimationReport(
        point=point_estimates(scores),
        uplift_intervals=uplift_bounds_all(scores),
        frechet_intervals=frechet_bounds_all(scores.mean_s0, scores.mean_s1),
        mean_s0=scores.mean_s0,
        mean_s1=scores.mean_s1,
        meta=dict(meta),
    )


@dataclass(frozen=True)
class SplitSpec:
    """How Algorithm-1 style estimation partitions the data.

    ``mode="kfold"`` scores every row out-of-fold with ``k`` folds;
    ``mode="holdout"`` trains once and scores a ``test_fraction`` hold-out.
    """

    mode: str = "kfold"
    k: int = 5
    test_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("kfold", "holdout"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.mode == "kfold" and self.k < 2:
            raise ValueError("k-fold split needs k >= 2")
        if self.mode == "holdout" and not (0.0 < self.test_fraction < 1.0):
            raise ValueError("test_fraction must be in (0, 1)")


def run_algorithm_one(dataset, learner, split: SplitSpec = SplitSpec(), threads: int = 1):
    """Train score models, score held-out rows and report bounds and point estimates.

    Returns ``(report, scored)`` where ``scored`` holds the held-out scores with
    row provenance (ids, treatment, outcome) for audit.
    """
    from . import ingest

    if split.mode == "kfold":
        scored = ingest.cross_validate(dataset, learner, split.k, seed=split.seed, threads=threads)
    else:
        train_idx, test_idx = ingest.holdout_split(dataset, split.test_fraction, seed=split.seed)
        model = ingest.train_two_model(dataset.subset(train_idx), learner)
        test = dataset.subset(test_idx)
        scored = ingest.ScoredRows(model.predict(test.X), test.ids, test.t, test.y)
    report = estimation_report(scored.scores, split=split.mode, n_rows=len(dataset))
    return report, scored


def model_covariance_term(dataset, learner, eval_X, replicates: int = 20, seed: int = 0) -> float:
    """Bootstrap estimate of ``E_X[cov_D(s0_hat(X), s1_hat(X))]``.

    Retrains the learner on ``replicates`` bootstrap resamples of ``dataset``
    and averages, over the evaluation rows, the across-replicate covariance of
    the two predicted scores. Expensive: ``replicates`` full trainings.
    """
    from . import ingest

    if replicates < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    ss = np.random.SeedSequence(seed)
    preds0, preds1 = [], []
    for child in ss.spawn(replicates):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, len(dataset), size=len(dataset))
        sub = dataset.subset(idx)
        model = ingest.train_two_model(sub, learner)
        sc = model.predict(eval_X)
        preds0.append(sc.s0)
        preds1.append(sc.s1)
    p0 = np.asarray(preds0)
    p1 = np.asarray(preds1)
    cov = np.mean((p0 - p0.mean(axis=0)) * (p1 - p1.mean(axis=0)), axis=0)
    return float(cov.mean())
