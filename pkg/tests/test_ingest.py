import warnings

import numpy as np
import pytest
from scipy.special import expit

from upliftbounds.core import ScoreSet
from upliftbounds.ingest import (
    SCORE_EPS,
    CampaignDataset,
    CampaignSchema,
    ConvergenceWarning,
    DataValidationError,
    ScoreModelSpec,
    ScoredRows,
    check_occupancy,
    cross_validate,
    fit_logistic,
    holdout_split,
    load_campaign_csv,
    read_score_file,
    train_two_model,
    undersampling_calibration,
    write_score_file,
)
from upliftbounds.synthetic import make_campaign, write_campaign_csv


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# --- loading -------------------------------------------------------------------

def test_toy_csv(tmp_path):
    p = _write(tmp_path, "id,x,t,y\na,1.5,0,0\nb,2.5,1,1\nc,,0,1\nd,0.5,1,0\n")
    ds = load_campaign_csv(p, CampaignSchema("t", "y", id="id"))
    assert len(ds) == 4 and ds.width == 1
    assert ds.feature_names == ("x",)
    assert np.isnan(ds.X[2, 0])
    assert list(ds.ids) == ["a", "b", "c", "d"]


def test_non_binary_treatment_names_column(tmp_path):
    p = _write(tmp_path, "x,arm,y\n1,1,0\n2,2,1\n")
    with pytest.raises(DataValidationError, match="arm") as exc:
        load_campaign_csv(p, CampaignSchema("arm", "y"))
    assert exc.value.column == "arm"
    assert exc.value.row == 3


def test_unknown_column(tmp_path):
    p = _write(tmp_path, "x,t,y\n1,0,0\n")
    with pytest.raises(DataValidationError, match="churn"):
        load_campaign_csv(p, CampaignSchema("t", "churn"))


def test_unparseable_cell_location(tmp_path):
    p = _write(tmp_path, "x,t,y\n1,0,0\nabc,1,1\n")
    with pytest.raises(DataValidationError) as exc:
        load_campaign_csv(p, CampaignSchema("t", "y", numeric=("x",)))
    assert exc.value.row == 3 and exc.value.column == "x"


def test_categorical_one_hot(tmp_path):
    p = _write(tmp_path, "plan,t,y\nb,0,0\na,1,1\nc,0,1\na,1,0\n")
    ds = load_campaign_csv(p, CampaignSchema("t", "y"))
    assert ds.feature_names == ("plan=a", "plan=b", "plan=c")
    assert ds.X.tolist() == [[0, 1, 0], [1, 0, 0], [0, 0, 1], [1, 0, 0]]


def test_identifier_like_text_column_rejected(tmp_path):
    body = "".join(f"u{i},{i % 2},{(i // 2) % 2}\n" for i in range(40))
    p = _write(tmp_path, "cust,t,y\n" + body)
    with pytest.raises(DataValidationError, match="id column") as exc:
        load_campaign_csv(p, CampaignSchema("t", "y"))
    assert exc.value.column == "cust"
    assert len(load_campaign_csv(p, CampaignSchema("t", "y", id="cust"))) == 40


def test_schema_sidecar(tmp_path):
    js = _write(tmp_path, '{"treatment": "t", "outcome": "y", "id": "id", "features": ["x"]}', "schema.json")
    schema = CampaignSchema.from_json(js)
    assert schema.features == ["x"]
    bad = _write(tmp_path, '{"treatment": "t", "bogus": 1}', "bad.json")
    with pytest.raises(DataValidationError):
        CampaignSchema.from_json(bad)


def test_campaign_sized_file_control_fraction(tmp_path):
    camp = make_campaign(seed=1)
    p = tmp_path / "campaign.csv"
    write_campaign_csv(p, camp.dataset)
    ds = load_campaign_csv(p, CampaignSchema("t", "y", id="id"))
    assert len(ds) == 11268
    assert ds.control_fraction == pytest.approx(0.33, abs=5e-5)
    assert np.array_equal(ds.X, camp.dataset.X)


# --- learner ----------------------------------------------------------------------

def test_fit_logistic_matches_scipy_minimiser():
    from scipy.optimize import minimize

    rng = np.random.default_rng(1)
    X = rng.standard_normal((300, 3))
    y = (rng.random(300) < expit(X @ [1.0, -0.5, 0.2] + 0.3)).astype(float)

    def loss(theta):
        z = X @ theta[:3] + theta[3]
        return np.sum(np.logaddexp(0, z) - y * z) + 0.5 * np.sum(theta[:3] ** 2)

    ref = minimize(loss, np.zeros(4), method="BFGS", options={"gtol": 1e-10}).x
    w, b, ok = fit_logistic(X, y, l2=1.0)
    assert ok
    assert np.allclose(np.r_[w, b], ref, atol=1e-5)


def test_separable_toy_scores_near_truth():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 400)
    x = x[np.abs(x) > 0.1]
    n = len(x)
    t = (np.arange(n) % 2).astype(np.int8)
    y = (x > 0).astype(np.int8)
    ds = CampaignDataset(x[:, None], t, y, np.array([f"r{i:04d}" for i in range(n)]), ("x",))
    model = train_two_model(ds, ScoreModelSpec(balance=False, l2=1e-3, max_iter=200))
    test = np.array([[-0.8], [-0.5], [0.5], [0.8]])
    sc = model.predict(test)
    assert np.all(np.abs(sc.s0 - [0, 0, 1, 1]) < 0.1)
    assert np.all(np.abs(sc.s1 - [0, 0, 1, 1]) < 0.1)


def test_logistic_oracle_recovery():
    rng = np.random.default_rng(2)
    n = 20_000
    X = rng.standard_normal((n, 3))
    s0 = expit(X @ [0.8, -0.4, 0.3] - 0.5)
    s1 = expit(X @ [0.2, 0.6, -0.5] + 0.2)
    t = (rng.random(n) < 0.5).astype(np.int8)
    y = (rng.random(n) < np.where(t == 1, s1, s0)).astype(np.int8)
    ids = np.array([f"r{i:05d}" for i in range(n)])
    train = CampaignDataset(X[:10_000], t[:10_000], y[:10_000], ids[:10_000], ("a", "b", "c"))
    model = train_two_model(train, ScoreModelSpec(balance=False))
    sc = model.predict(X[10_000:])
    assert np.mean(np.abs(sc.s0 - s0[10_000:])) < 0.05
    assert np.mean(np.abs(sc.s1 - s1[10_000:])) < 0.05


def _rare_outcome(n, rate, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    z = X @ [0.6, -0.3]
    from scipy.optimize import brentq

    b = brentq(lambda c: expit(c + z).mean() - rate, -20, 20)
    p = expit(b + z)
    t = (rng.random(n) < 0.5).astype(np.int8)
    y = (rng.random(n) < p).astype(np.int8)
    return CampaignDataset(X, t, y, np.array([f"r{i:06d}" for i in range(n)]), ("a", "b")), p


def test_balanced_calibration_restores_base_rate():
    ds, p = _rare_outcome(40_000, 0.04, 3)
    rate = float(p.mean())
    cal = train_two_model(ds, ScoreModelSpec(k=5)).predict(ds.X)
    raw = train_two_model(ds, ScoreModelSpec(k=5, calibrate=False)).predict(ds.X)
    for arm in (cal.s0, cal.s1):
        assert abs(arm.mean() - rate) / rate < 0.2
    for arm in (raw.s0, raw.s1):
        assert arm.mean() > 5 * rate
    after = train_two_model(ds, ScoreModelSpec(k=5, calibration_order="after")).predict(ds.X)
    assert abs(after.s0.mean() - rate) / rate < 0.2


def test_calibration_map_inverts_prior_shift():
    # undersampling negatives at rate r turns p into p / (p + r (1 - p))
    p = np.linspace(0.001, 0.999, 50)
    for r in (0.05, 0.3, 1.0):
        p_s = p / (p + r * (1 - p))
        assert np.allclose(undersampling_calibration(p_s, r), p, atol=1e-12)


def test_calibration_at_scale_matches_base_rate():
    ds, p = _rare_outcome(100_000, 0.04, 4)
    model = train_two_model(ds, ScoreModelSpec(k=10))
    sc = model.predict(ds.X)
    for arm, s in ((0, sc.s0), (1, sc.s1)):
        obs = ds.y[ds.t == arm]
        se = obs.std() / np.sqrt(obs.size)
        assert abs(s.mean() - p.mean()) < 3 * se


def test_scores_are_clamped():
    rng = np.random.default_rng(0)
    x = np.r_[rng.uniform(-3, -1, 50), rng.uniform(1, 3, 50)]
    t = np.tile([0, 1], 50).astype(np.int8)
    y = (x > 0).astype(np.int8)
    ds = CampaignDataset(x[:, None], t, y, np.array([f"{i:03d}" for i in range(100)]), ("x",))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = train_two_model(ds, ScoreModelSpec(balance=False, l2=0.0, max_iter=5))
    sc = model.predict(np.array([[-50.0], [50.0]]))
    for s in (sc.s0, sc.s1):
        assert s.min() >= SCORE_EPS and s.max() <= 1 - SCORE_EPS


def test_non_convergence_is_a_warning():
    camp = make_campaign(n=600, seed=0)
    with pytest.warns(ConvergenceWarning):
        model = train_two_model(camp.dataset, ScoreModelSpec(balance=False, max_iter=1, tol=1e-30))
    assert model.warnings


def test_occupancy_errors_name_the_cell():
    with pytest.raises(DataValidationError, match="t=0, y=1"):
        check_occupancy([0, 0, 1, 1], [0, 0, 0, 1])
    with pytest.raises(DataValidationError, match="treated"):
        check_occupancy([0, 0], [0, 1])


# --- splitting ---------------------------------------------------------------------

def _small(n=100, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    t = (np.arange(n) % 2).astype(np.int8)
    y = (rng.random(n) < 0.3).astype(np.int8)
    y[:4] = [0, 0, 1, 1]
    return CampaignDataset(X, t, y, np.array([f"r{i:04d}" for i in range(n)]), ("a", "b"))


def test_every_row_scored_once():
    ds = _small()
    out = cross_validate(ds, ScoreModelSpec(k=2), k_folds=5, seed=1)
    assert len(out) == 100
    assert list(out.ids) == list(ds.ids)
    assert np.all(np.isfinite(out.scores.s0))


def test_fold_occupancy_error_names_fold():
    ds = CampaignDataset(np.zeros((3, 1)), np.zeros(3, dtype=np.int8), np.zeros(3, dtype=np.int8),
                         np.array(["a", "b", "c"]), ("x",))
    with pytest.raises(DataValidationError):
        cross_validate(ds, ScoreModelSpec(), k_folds=2)
    ds = CampaignDataset(np.zeros((8, 1)), np.array([0, 0, 0, 1, 1, 1, 1, 1], dtype=np.int8),
                         np.array([0, 0, 1, 0, 1, 0, 1, 0], dtype=np.int8), np.array(list("abcdefgh")), ("x",))
    with pytest.raises(DataValidationError, match="fold"):
        cross_validate(ds, ScoreModelSpec(), k_folds=3)


def test_cv_is_deterministic_and_thread_independent():
    ds = _small(300)
    a = cross_validate(ds, ScoreModelSpec(k=3), 5, seed=4, threads=1)
    b = cross_validate(ds, ScoreModelSpec(k=3), 5, seed=4, threads=4)
    assert np.array_equal(a.scores.s0, b.scores.s0)
    assert np.array_equal(a.scores.s1, b.scores.s1)


def test_permutation_equivariance():
    ds = _small(300, seed=5)
    perm = np.random.default_rng(9).permutation(300)
    a = cross_validate(ds, ScoreModelSpec(k=3), 5, seed=2)
    b = cross_validate(ds.subset(perm), ScoreModelSpec(k=3), 5, seed=2)
    assert np.array_equal(a.scores.s0[perm], b.scores.s0)
    assert np.array_equal(a.scores.s1[perm], b.scores.s1)


def test_holdout_split_partitions():
    ds = _small(200)
    tr, te = holdout_split(ds, 0.25, seed=3)
    assert len(te) == 50 and len(tr) == 150
    assert set(tr).isdisjoint(te)


def test_beta_hat_stable_across_cv_seeds():
    from upliftbounds.estimation import point_estimates

    camp = make_campaign(seed=11)
    betas = []
    for s in range(10):
        out = cross_validate(camp.dataset, ScoreModelSpec(k=3, seed=s), 5, seed=s)
        betas.append(point_estimates(out.scores)["beta"])
    assert max(betas) - min(betas) < 0.01


# --- score files ------------------------------------------------------------------

def test_score_file_roundtrip_is_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    ss = ScoreSet(rng.random(1000), rng.random(1000))
    p = tmp_path / "s.csv"
    write_score_file(p, ss)
    back = read_score_file(p)
    assert np.array_equal(back.scores.s0, ss.s0)
    assert np.array_equal(back.scores.s1, ss.s1)
    assert back.t is None


def test_score_file_echoes_outcomes(tmp_path):
    rows = ScoredRows(ScoreSet([0.1, 0.2], [0.3, 0.4]), np.array(["a", "b"]), np.array([0, 1]), np.array([1, 0]))
    p = tmp_path / "s.csv"
    write_score_file(p, rows)
    back = read_score_file(p)
    assert back.t.tolist() == [0, 1] and back.y.tolist() == [1, 0]


def test_score_out_of_range(tmp_path):
    p = _write(tmp_path, "id,s0_hat,s1_hat\na,0.1,0.2\nb,1.2,0.3\n")
    with pytest.raises(DataValidationError) as exc:
        read_score_file(p)
    assert exc.value.row == 3 and exc.value.column == "s0_hat"


def test_score_file_missing_column(tmp_path):
    p = _write(tmp_path, "s0_hat\n0.1\n")
    with pytest.raises(DataValidationError, match="s1_hat"):
        read_score_file(p)


def test_score_file_empty(tmp_path):
    with pytest.raises(DataValidationError):
        read_score_file(_write(tmp_path, ""))
    with pytest.raises(DataValidationError):
        read_score_file(_write(tmp_path, "id,s0_hat,s1_hat\n", "h.csv"))


def test_malformed_score_row(tmp_path):
    p = _write(tmp_path, "id,s0_hat,s1_hat\na,0.1\n")
    with pytest.raises(DataValidationError) as exc:
        read_score_file(p)
    assert exc.value.row == 2
