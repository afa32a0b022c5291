import numpy as np
import pytest

from upliftbounds.core import DomainError, ScoreSet, uplift_bounds_all
from upliftbounds.simulation import (
    BENCHMARK_COLUMNS,
    CHURN_POINT,
    BenchmarkProtocol,
    SimulationParams,
    draw_run_params,
    evaluate,
    run_benchmark,
    sample_dirichlet,
    sample_population,
    sensitivity_sweep,
)


def test_population_is_deterministic_given_seed():
    p = SimulationParams(500, 10, (1.0, 2.0, 0.5, 0.3), seed=42)
    a, b = sample_population(p), sample_population(p)
    for name in ("dists", "s0_hat", "s1_hat", "y0", "y1"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = sample_population(SimulationParams(500, 10, (1.0, 2.0, 0.5, 0.3), seed=43))
    assert not np.array_equal(a.dists, c.dists)


def test_score_identities_hold_exactly():
    pop = sample_population(SimulationParams(2000, 7, (0.3, 0.2, 0.4, 0.1), seed=1))
    d = pop.dists
    assert np.array_equal(pop.s0, d[:, 1] + d[:, 3])
    assert np.array_equal(pop.s1, d[:, 2] + d[:, 3])
    assert np.allclose(d.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("v", [1, 3, 20, 64, 65, 200])
def test_noisy_scores_live_on_lattice(v):
    pop = sample_population(SimulationParams(1000, v, (1, 1, 1, 1), seed=v))
    for s in (pop.s0_hat, pop.s1_hat):
        k = s * v
        assert np.allclose(k, np.round(k), atol=1e-9)
        assert s.min() >= 0.0 and s.max() <= 1.0


def test_outcomes_follow_distribution():
    pop = sample_population(SimulationParams(200_000, 1, (4, 1, 2, 3), seed=9))
    joint = np.array([
        np.mean((pop.y0 == 0) & (pop.y1 == 0)),
        np.mean((pop.y0 == 1) & (pop.y1 == 0)),
        np.mean((pop.y0 == 0) & (pop.y1 == 1)),
        np.mean((pop.y0 == 1) & (pop.y1 == 1)),
    ])
    assert np.allclose(joint, pop.truth, atol=0.005)


@pytest.mark.parametrize("w", [(2, 1, 1, 2), (0.05, 0.3, 0.02, 0.1), (0.947, 0.020, 0.017, 0.017)])
def test_dirichlet_moments(w):
    rng = np.random.default_rng(123)
    d = sample_dirichlet(rng, w, 1_000_000)
    A = sum(w)
    means = d.mean(axis=0)
    se = d.std(axis=0) / 1000.0
    assert np.all(np.abs(means - np.asarray(w) / A) < 3 * se + 1e-12)
    phi = d[:, 0] * d[:, 3] - d[:, 1] * d[:, 2]
    expected = (w[0] * w[3] - w[1] * w[2]) / (A * (A + 1))
    assert abs(phi.mean() - expected) < 3 * phi.std() / 1000.0 + 1e-12


def test_dirichlet_degenerate_weights():
    d = sample_dirichlet(np.random.default_rng(0), (1e6, 1, 1, 1), 1000)
    assert np.all(np.isfinite(d))
    assert d[:, 0].min() > 0.999


def test_dirichlet_tiny_weights_stay_on_simplex():
    d = sample_dirichlet(np.random.default_rng(0), (0.001, 0.002, 0.001, 0.003), 10_000)
    assert np.all(np.isfinite(d))
    assert np.allclose(d.sum(axis=1), 1.0, atol=1e-12)


def test_binomial_variance_per_bin():
    v = 10
    pop = sample_population(SimulationParams(400_000, v, (1, 1, 1, 1), seed=4))
    s, sh = pop.s0, pop.s0_hat
    edges = np.linspace(0, 1, 11)
    idx = np.clip(np.digitize(s, edges) - 1, 0, 9)
    for b in range(10):
        m = idx == b
        r2 = (sh[m] - s[m]) ** 2
        expected = s[m] * (1 - s[m]) / v
        diff = r2 - expected
        assert abs(diff.mean()) < 3 * diff.std() / np.sqrt(m.sum())


def test_exact_scores_contain_truth_every_run():
    rng = np.random.default_rng(8)
    for k in range(50):
        w = rng.uniform(0.05, 5.0, size=4)
        pop = sample_population(SimulationParams(int(rng.integers(5, 500)), 10, tuple(w), seed=k))
        ub = uplift_bounds_all(ScoreSet(pop.s0, pop.s1))
        for q, iv in ub.items():
            assert iv.contains(pop.truth[q.index], tol=1e-12)


def test_large_v_converges_to_exact_report():
    pop = sample_population(SimulationParams(10_000, 500, tuple(10 * p for p in CHURN_POINT), seed=3))
    noisy = evaluate(pop.s0_hat, pop.s1_hat)
    exact = evaluate(pop.s0, pop.s1)
    for k in exact:
        assert np.max(np.abs(noisy[k] - exact[k])) < 0.01


def test_params_validation():
    with pytest.raises(DomainError):
        SimulationParams(0, 5, (1, 1, 1, 1))
    with pytest.raises(DomainError):
        SimulationParams(10, 0, (1, 1, 1, 1))
    with pytest.raises(DomainError):
        SimulationParams(10, 5, (1, 0, 1, 1))


# --- benchmark ---------------------------------------------------------------------

def test_run_params_stay_in_ranges():
    proto = BenchmarkProtocol(runs=200, seed=5)
    for r in range(200):
        params, point, A = draw_run_params(proto, r)
        assert 10 <= params.n <= 10000
        assert 5 <= params.v <= 50
        assert 0.1 <= A <= 15
        assert sum(point) == pytest.approx(1.0)


def test_single_run_benchmark_is_reproducible():
    proto = BenchmarkProtocol(runs=1, seed=17)
    a, b = run_benchmark(proto), run_benchmark(proto)
    assert len(a) == 1
    for c in BENCHMARK_COLUMNS:
        assert np.array_equal(a[c], b[c], equal_nan=True)


def test_benchmark_independent_of_thread_count():
    proto = BenchmarkProtocol(runs=40, seed=3)
    a, b = run_benchmark(proto, threads=1), run_benchmark(proto, threads=4)
    for c in BENCHMARK_COLUMNS:
        assert np.array_equal(a[c], b[c], equal_nan=True)


def test_benchmark_aggregates_consistent_with_columns():
    rep = run_benchmark(BenchmarkProtocol(runs=100, seed=2))
    agg = rep.aggregates("beta")
    width = rep["beta_uplift_upper"] - rep["beta_uplift_lower"]
    assert agg["mean_uplift_width"] == pytest.approx(width.mean())
    err = rep["beta_point"] - rep["beta_truth"]
    assert agg["rmse_point"] == pytest.approx(np.sqrt(np.mean(err ** 2)))
    assert agg["mean_uplift_width"] < agg["mean_frechet_width"]
    hist = rep.phi_histogram()
    assert sum(r["runs"] for r in hist) == 100


def test_protocol_validation():
    with pytest.raises(DomainError):
        BenchmarkProtocol(runs=0)
    with pytest.raises(DomainError):
        BenchmarkProtocol(n_range=(100, 10))
    with pytest.raises(DomainError):
        BenchmarkProtocol(A_law="normal")


# --- sweeps --------------------------------------------------------------------------

FIXED = SimulationParams(500, 20, tuple(CHURN_POINT), seed=1)


def test_sweep_validation():
    with pytest.raises(DomainError):
        sensitivity_sweep("A", [], FIXED)
    with pytest.raises(DomainError):
        sensitivity_sweep("B", [1.0], FIXED)
    with pytest.raises(DomainError):
        sensitivity_sweep("A", [1.0, 0.5, 2.0], FIXED)


def test_singleton_sweep():
    res = sensitivity_sweep("v", [10], FIXED, replicates=3)
    assert len(res.rows()) == 1
    assert res.replicates["span"].shape == (1, 3)


def test_sweep_deterministic_across_threads():
    a = sensitivity_sweep("N", [10, 100], FIXED, replicates=4, threads=1)
    b = sensitivity_sweep("N", [10, 100], FIXED, replicates=4, threads=3)
    for k in a.replicates:
        assert np.array_equal(a.replicates[k], b.replicates[k])


def test_entropy_increases_with_concentration():
    res = sensitivity_sweep("A", [0.1, 1, 10, 100], FIXED, replicates=5)
    assert np.all(np.diff(res.means("entropy")) > 0)
