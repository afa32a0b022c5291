"""Synthetic randomised campaigns with known counterfactual truth.

Features are standard normal; each arm's outcome probability is logistic in
the features, so the baseline learner is well specified. Per individual the
joint law of (Y0, Y1) places beta(x) at a fixed fraction ``coupling`` of
its Fréchet range given s0(x), s1(x); the other three cells follow from the
marginals. Observed outcome is ``Y_t`` for the assigned arm ``t``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .core import QUANTITIES
from .ingest import CampaignDataset


@dataclass(frozen=True, eq=False)
class SyntheticCampaign:
    dataset: CampaignDataset
    dists: np.ndarray  # (n, 4) true per-individual distributions
    s0: np.ndarray
    s1: np.ndarray

    @property
    def truth(self) -> dict[str, float]:
        m = self.dists.mean(axis=0)
        return {q.value: float(m[q.index]) for q in QUANTITIES}


def _intercept_for(rate: float, z: np.ndarray) -> float:
    return brentq(lambda b: float(expit(b + z).mean()) - rate, -40.0, 40.0)


def make_campaign(
    n: int = 11268,
    control_fraction: float = 0.33,
    rate0: float = 0.0485,
    rate1: float = 0.0403,
    n_features: int = 5,
    signal: float = 0.75,
    coupling: float = 0.5,
    seed: int = 0,
) -> SyntheticCampaign:
    """Defaults mimic a churn campaign: 11268 rows, 33% control, churn 4.85% / 4.03%.

    ``signal`` is the standard deviation of each arm's log-odds across
    individuals (higher = more informative features). Intercepts are tuned so
    the expected outcome rates of the generated rows equal ``rate0``/``rate1``.
    """
    if not 0.0 <= coupling <= 1.0:
        raise ValueError("coupling must lie in [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    X = rng.standard_normal((n, n_features))
    w0 = rng.standard_normal(n_features)
    w1 = w0 + 0.5 * rng.standard_normal(n_features)
    w0 *= signal / np.linalg.norm(w0)
    w1 *= signal / np.linalg.norm(w1)
    z0, z1 = X @ w0, X @ w1
    s0 = expit(_intercept_for(rate0, z0) + z0)
    s1 = expit(_intercept_for(rate1, z1) + z1)

    lo = np.maximum(0.0, s0 - s1)
    hi = np.minimum(s0, 1.0 - s1)
    beta = lo + coupling * (hi - lo)
    delta = s0 - beta
    gamma = s1 - delta
    alpha = 1.0 - beta - gamma - delta
    dists = np.clip(np.stack([alpha, beta, gamma, delta], axis=1), 0.0, 1.0)
    dists /= dists.sum(axis=1, keepdims=True)

    n_control = int(round(control_fraction * n))
    t = np.ones(n, dtype=np.int8)
    t[rng.permutation(n)[:n_control]] = 0
    cum = np.cumsum(dists[:, :3], axis=1)
    k = (rng.random(n)[:, None] >= cum).sum(axis=1)
    y0 = (k == 1) | (k == 3)
    y1 = (k == 2) | (k == 3)
    y = np.where(t == 1, y1, y0).astype(np.int8)
    ids = np.array([f"c{i:06d}" for i in range(n)])
    ds = CampaignDataset(X, t, y, ids, tuple(f"f{j}" for j in range(n_features)))
    return SyntheticCampaign(ds, dists, s0, s1)


def write_campaign_csv(path, dataset: CampaignDataset, treatment: str = "t", outcome: str = "y", id_col: str = "id") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([id_col, *dataset.feature_names, treatment, outcome])
        for i in range(len(dataset)):
            w.writerow([dataset.ids[i], *(format(x, ".17g") for x in dataset.X[i]), int(dataset.t[i]), int(dataset.y[i])])
