"""Hierarchical simulation of counterfactual populations and the estimator benchmark.

Each individual gets a counterfactual distribution drawn from a Dirichlet
law, exact scores ``s0 = beta + delta`` and ``s1 = gamma + delta``, noisy
scores drawn as ``Binomial(v, s) / v`` (variance ``s (1 - s) / v``), and a
realised outcome pair from the categorical law of its distribution.

Runs and replicates draw from independent streams keyed by
``SeedSequence(seed, spawn_key=(index, ...))``, so results do not depend
on execution order or thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import QUANTITIES, DomainError, Quantity, pointwise_bounds
from .estimation import pointwise_products, theoretical_bias

#: Counterfactual distribution used for the sensitivity sweeps (telecom churn scenario).
CHURN_POINT = (0.947, 0.020, 0.017, 0.017)

_COLUMNS_PER_Q = ("truth", "point", "uplift_lower", "uplift_upper", "frechet_lower", "frechet_upper",
                  "exact_uplift_lower", "exact_uplift_upper")


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def sample_dirichlet(rng: np.random.Generator, weights: Sequence[float], size: int) -> np.ndarray:
    """Draw ``size`` Dirichlet vectors by normalising independent Gamma draws.

    Shapes below one use ``G(w) = G(w + 1) * U ** (1 / w)``, evaluated in log
    space so tiny weights do not underflow to an all-zero row.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size < 2 or not np.all(w > 0) or not np.all(np.isfinite(w)):
        raise DomainError(f"Dirichlet weights must be positive and finite, got {w}")
    g = rng.standard_gamma(w + 1.0, size=(size, w.size))
    u = rng.random((size, w.size))
    # log1p(-u) keeps u == 0 finite: 1 - u lies in (0, 1]
    logg = np.log(g) + np.log1p(-u) / w
    logg -= logg.max(axis=1, keepdims=True)
    x = np.exp(logg)
    return x / x.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# populations


@dataclass(frozen=True)
class SimulationParams:
    n: int
    v: int
    dirichlet: tuple[float, float, float, float]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dirichlet", tuple(float(x) for x in self.dirichlet))
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if int(self.v) != self.v or self.v < 1:
            raise DomainError(f"v must be a positive integer, got {self.v!r}")
        if len(self.dirichlet) != 4 or not all(x > 0 and math.isfinite(x) for x in self.dirichlet):
            raise DomainError(f"Dirichlet weights must be 4 positive numbers, got {self.dirichlet}")

    @property
    def concentration(self) -> float:
        return math.fsum(self.dirichlet)

    @property
    def point(self) -> tuple[float, ...]:
        A = self.concentration
        return tuple(x / A for x in self.dirichlet)

    @property
    def expected_phi(self) -> float:
        return theoretical_bias(*self.dirichlet)


@dataclass(frozen=True, eq=False)
class SimulatedPopulation:
    dists: np.ndarray  # (n, 4) alpha..delta per individual
    s0: np.ndarray
    s1: np.ndarray
    s0_hat: np.ndarray
    s1_hat: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    params: SimulationParams

    def __len__(self) -> int:
        return self.dists.shape[0]

    @property
    def truth(self) -> np.ndarray:
        """Population (alpha, beta, gamma, delta): componentwise means."""
        return self.dists.mean(axis=0)

    @property
    def phi(self) -> np.ndarray:
        """Per-individual alpha*delta - beta*gamma."""
        d = self.dists
        return d[:, 0] * d[:, 3] - d[:, 1] * d[:, 2]

    def entropy(self) -> float:
        d = self.dists
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(d > 0, -d * np.log(d), 0.0)
        return float(h.sum(axis=1).mean())


def _sample(params: SimulationParams, rng: np.random.Generator) -> SimulatedPopulation:
    n, v = int(params.n), int(params.v)
    d = sample_dirichlet(rng, params.dirichlet, n)
    s0 = d[:, 1] + d[:, 3]
    s1 = d[:, 2] + d[:, 3]
    p0 = np.clip(s0, 0.0, 1.0)
    p1 = np.clip(s1, 0.0, 1.0)
    s0_hat = rng.binomial(v, p0) / v
    s1_hat = rng.binomial(v, p1) / v
    cum = np.cumsum(d[:, :3], axis=1)
    k = (rng.random(n)[:, None] >= cum).sum(axis=1)
    y0 = ((k == 1) | (k == 3)).astype(np.int8)
    y1 = ((k == 2) | (k == 3)).astype(np.int8)
    for a in (d, s0, s1, s0_hat, s1_hat, y0, y1):
        a.flags.writeable = False
    return SimulatedPopulation(d, s0, s1, s0_hat, s1_hat, y0, y1, params)


def sample_population(params: SimulationParams) -> SimulatedPopulation:
    """Generate ``params.n`` i.i.d. individuals; deterministic given ``params.seed``."""
    return _sample(params, _stream(params.seed))


# ---------------------------------------------------------------------------
# estimators evaluated on a population


def evaluate(s0, s1) -> dict[str, np.ndarray]:
    """Point estimates, uplift bounds and Fréchet bounds from one set of scores.

    Arrays of length 4 ordered alpha..delta. Works on raw arrays so the
    benchmark avoids per-run object construction.
    """
    lo, up = pointwise_bounds(s0, s1)
    m0, m1 = float(np.mean(s0)), float(np.mean(s1))
    flo, fup = pointwise_bounds(m0, m1)
    return {
        "point": pointwise_products(s0, s1).mean(axis=0),
        "uplift_lower": lo.mean(axis=0),
        "uplift_upper": up.mean(axis=0),
        "frechet_lower": flo,
        "frechet_upper": fup,
    }


# ---------------------------------------------------------------------------
# benchmark


_LAWS = ("log", "uniform")


@dataclass(frozen=True)
class BenchmarkProtocol:
    """Randomised parameter protocol.

    Each run draws ``N``, ``v`` and the concentration ``A`` from their
    ranges under the given laws (``"log"``: log-uniform, ``"uniform"``),
    a counterfactual point uniformly on the simplex, and uses Dirichlet
    weights ``A * point``. ``N`` and ``v`` are rounded to integers.
    """

    runs: int = 5000
    n_range: tuple[float, float] = (10, 10000)
    v_range: tuple[float, float] = (5, 50)
    A_range: tuple[float, float] = (0.1, 15.0)
    n_law: str = "log"
    v_law: str = "log"
    A_law: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.runs < 1:
            raise DomainError("runs must be >= 1")
        for name in ("n_range", "v_range", "A_range"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            if not (0 < lo <= hi):
                raise DomainError(f"{name} must satisfy 0 < low <= high, got {(lo, hi)}")
        if self.n_range[0] < 1 or self.v_range[0] < 1:
            raise DomainError("N and v ranges must start at 1 or above")
        for name in ("n_law", "v_law", "A_law"):
            if getattr(self, name) not in _LAWS:
                raise DomainError(f"{name} must be one of {_LAWS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("n_range", "v_range", "A_range"):
            d[k] = list(d[k])
        return d


def _draw(rng, law, lo, hi) -> float:
    if law == "log":
        return math.exp(rng.uniform(math.log(lo), math.log(hi)))
    return rng.uniform(lo, hi)


def draw_run_params(protocol: BenchmarkProtocol, run: int) -> tuple[SimulationParams, tuple[float, ...], float]:
    """Parameters of one benchmark run: ``(params, simplex point, A)``."""
    rng = _stream(protocol.seed, run, 0)
    n = int(round(_draw(rng, protocol.n_law, *protocol.n_range)))
    v = int(round(_draw(rng, protocol.v_law, *protocol.v_range)))
    A = float(_draw(rng, protocol.A_law, *protocol.A_range))
    point = tuple(float(x) for x in sample_dirichlet(rng, np.ones(4), 1)[0])
    weights = tuple(A * p for p in point)
    seed = int(np.random.SeedSequence(protocol.seed, spawn_key=(run, 1)).generate_state(1, np.uint64)[0])
    return SimulationParams(n, v, weights, seed), point, A


def _one_run(protocol: BenchmarkProtocol, run: int) -> dict[str, float]:
    params, point, A = draw_run_params(protocol, run)
    pop = sample_population(params)
    noisy = evaluate(pop.s0_hat, pop.s1_hat)
    exact_lo, exact_up = pointwise_bounds(pop.s0, pop.s1)
    truth = pop.truth
    rec: dict[str, float] = {
        "run": run,
        "n": params.n,
        "v": params.v,
        "A": A,
        "seed": params.seed,
        "expected_phi": params.expected_phi,
        "phi_mean": float(pop.phi.mean()),
        "entropy": pop.entropy(),
    }
    for q in QUANTITIES:
        i = q.index
        rec[f"point_{q.value}"] = point[i]
        rec[f"{q.value}_truth"] = float(truth[i])
        rec[f"{q.value}_point"] = float(noisy["point"][i])
        rec[f"{q.value}_uplift_lower"] = float(noisy["uplift_lower"][i])
        rec[f"{q.value}_uplift_upper"] = float(noisy["uplift_upper"][i])
        rec[f"{q.value}_frechet_lower"] = float(noisy["frechet_lower"][i])
        rec[f"{q.value}_frechet_upper"] = float(noisy["frechet_upper"][i])
        rec[f"{q.value}_exact_uplift_lower"] = float(exact_lo[:, i].mean())
        rec[f"{q.value}_exact_uplift_upper"] = float(exact_up[:, i].mean())
    return rec


BENCHMARK_COLUMNS: tuple[str, ...] = (
    ("run", "n", "v", "A", "seed", "expected_phi", "phi_mean", "entropy")
    + tuple(f"point_{q.value}" for q in QUANTITIES)
    + tuple(f"{q.value}_{c}" for q in QUANTITIES for c in _COLUMNS_PER_Q)
)


def _rmse(x) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


@dataclass(frozen=True, eq=False)
class BenchmarkReport:
    """Per-run records (column arrays, run-index order) plus aggregates."""

    protocol: BenchmarkProtocol
    columns: dict[str, np.ndarray]

    def __len__(self) -> int:
        return int(self.columns["run"].size)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def aggregates(self, q: Quantity | str = Quantity.BETA) -> dict[str, float]:
        q = Quantity(q)
        c = self.columns
        truth = c[f"{q.value}_truth"]
        ulo, uup = c[f"{q.value}_uplift_lower"], c[f"{q.value}_uplift_upper"]
        flo, fup = c[f"{q.value}_frechet_lower"], c[f"{q.value}_frechet_upper"]
        return {
            "runs": len(self),
            "mean_uplift_width": float(np.mean(uup - ulo)),
            "mean_frechet_width": float(np.mean(fup - flo)),
            "rmse_point": _rmse(c[f"{q.value}_point"] - truth),
            "rmse_uplift_midpoint": _rmse(0.5 * (ulo + uup) - truth),
            "rmse_frechet_midpoint": _rmse(0.5 * (flo + fup) - truth),
            "exact_uplift_coverage": float(
                np.mean((c[f"{q.value}_exact_uplift_lower"] <= truth + 1e-12) & (truth <= c[f"{q.value}_exact_uplift_upper"] + 1e-12))
            ),
            "noisy_uplift_coverage": float(np.mean((ulo <= truth) & (truth <= uup))),
        }

    def strata(self, q: Quantity | str = Quantity.ALPHA, bins: int = 10, min_count: int = 20) -> list[dict]:
        """Run averages in equal-width bins of the true value; sparse bins dropped."""
        q = Quantity(q)
        c = self.columns
        truth = c[f"{q.value}_truth"]
        edges = np.linspace(0.0, 1.0, bins + 1)
        which = np.clip(np.searchsorted(edges, truth, side="right") - 1, 0, bins - 1)
        out = []
        for b in range(bins):
            m = which == b
            if m.sum() < min_count:
                continue
            row = {"quantity": q.value, "bin_lower": float(edges[b]), "bin_upper": float(edges[b + 1]), "runs": int(m.sum())}
            for name in ("truth", "point", "uplift_lower", "uplift_upper", "frechet_lower", "frechet_upper"):
                row[f"mean_{name}"] = float(c[f"{q.value}_{name}"][m].mean())
            out.append(row)
        return out

    def phi_histogram(self, bins: int = 40) -> list[dict]:
        """Histogram of the per-run expected bias (ad - bc) / (A (A + 1))."""
        x = self.columns["expected_phi"]
        counts, edges = np.histogram(x, bins=bins, range=(-0.25, 0.25))
        return [
            {"bin_lower": float(edges[i]), "bin_upper": float(edges[i + 1]), "runs": int(counts[i])}
            for i in range(bins)
        ]

    def summary(self) -> dict:
        return {
            "protocol": self.protocol.to_dict(),
            "table2_beta": self.aggregates(Quantity.BETA),
            "by_quantity": {q.value: self.aggregates(q) for q in QUANTITIES},
            "mean_expected_phi": float(np.mean(self.columns["expected_phi"])),
        }


def _ordered_map(fn: Callable[[int], dict], indices: Sequence[int], threads: int) -> list[dict]:
    if threads > 1 and len(indices) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, indices))
    return [fn(i) for i in indices]


def run_benchmark(protocol: BenchmarkProtocol = BenchmarkProtocol(), threads: int = 1) -> BenchmarkReport:
    records = _ordered_map(lambda i: _one_run(protocol, i), range(protocol.runs), threads)
    columns = {name: np.asarray([r[name] for r in records]) for name in BENCHMARK_COLUMNS}
    return BenchmarkReport(protocol, columns)


# ---------------------------------------------------------------------------
# sensitivity sweeps

SWEEP_AXES = ("A", "N", "v")
SWEEP_METRICS = ("entropy", "span", "exact_span", "frechet_span", "abs_error", "error", "truth", "point", "phi_mean")


@dataclass(frozen=True, eq=False)
class SweepResult:
    axis: str
    grid: tuple[float, ...]
    expected_phi: tuple[float, ...]
    replicates: dict[str, np.ndarray]  # metric -> (len(grid), n_replicates)

    def means(self, metric: str) -> np.ndarray:
        return self.replicates[metric].mean(axis=1)

    def rows(self) -> list[dict]:
        out = []
        for g, value in enumerate(self.grid):
            row = {"axis": self.axis, "value": value, "expected_phi": self.expected_phi[g],
                   "replicates": int(self.replicates["span"].shape[1])}
            for m in SWEEP_METRICS:
                r = self.replicates[m][g]
                row[f"{m}_mean"] = float(r.mean())
                row[f"{m}_std"] = float(r.std())
            out.append(row)
        return out


def _sweep_params(axis: str, value, fixed: SimulationParams) -> SimulationParams:
    if axis == "A":
        if not value > 0:
            raise DomainError("A must be positive")
        return SimulationParams(fixed.n, fixed.v, tuple(value * p for p in fixed.point), fixed.seed)
    if axis == "N":
        return SimulationParams(int(value), fixed.v, fixed.dirichlet, fixed.seed)
    return SimulationParams(fixed.n, int(value), fixed.dirichlet, fixed.seed)


def sensitivity_sweep(
    axis: str, grid: Sequence[float], fixed: SimulationParams, replicates: int = 30, threads: int = 1
) -> SweepResult:
    """Vary one of ``A``, ``N``, ``v`` with the others fixed.

    For the ``A`` axis the Dirichlet weights become ``A * fixed.point``.
    Each (grid point, replicate) pair uses its own stream derived from
    ``fixed.seed``. Recorded per replicate: conditional entropy, uplift
    span from noisy and from exact scores, Fréchet span, and the error of
    the beta point estimate from noisy scores.
    """
    if axis not in SWEEP_AXES:
        raise DomainError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise DomainError("grid must not be empty")
    diffs = np.diff(grid)
    if len(grid) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise DomainError("grid must be strictly monotone")
    if replicates < 1:
        raise DomainError("replicates must be >= 1")
    params = [_sweep_params(axis, g, fixed) for g in grid]
    jobs = [(g, r) for g in range(len(grid)) for r in range(replicates)]

    def job(k):
        g, r = jobs[k]
        pop = _sample(params[g], _stream(fixed.seed, g, r))
        s0, s1 = pop.s0_hat, pop.s1_hat
        b = QUANTITIES.index(Quantity.BETA)
        truth = float(pop.truth[b])
        point = float(np.mean(s0 * (1.0 - s1)))
        m0, m1 = float(np.mean(s0)), float(np.mean(s1))
        return {
            "entropy": pop.entropy(),
            "span": float(np.mean(np.minimum(np.minimum(s0, s1), np.minimum(1 - s0, 1 - s1)))),
            "exact_span": float(np.mean(np.minimum(np.minimum(pop.s0, pop.s1), np.minimum(1 - pop.s0, 1 - pop.s1)))),
            "frechet_span": min(m0, m1, 1 - m0, 1 - m1),
            "abs_error": abs(point - truth),
            "error": point - truth,
            "truth": truth,
            "point": point,
            "phi_mean": float(pop.phi.mean()),
        }

    results = _ordered_map(job, range(len(jobs)), threads)
    reps = {
        m: np.asarray([res[m] for res in results]).reshape(len(grid), replicates) for m in SWEEP_METRICS
    }
    return SweepResult(axis, grid, tuple(p.expected_phi for p in params), reps)
