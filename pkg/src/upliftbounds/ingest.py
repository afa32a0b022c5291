"""Campaign data ingestion, a two-model score learner, cross-validation and score files.

The learner is a T-learner: one L2-regularised logistic model per treatment
arm, fitted by Newton iterations on standardised features. With balancing
on, each arm is an EasyEnsemble of ``k`` base models, each trained on the
whole minority class plus an equal-size sample of the majority class; the
base predictions are mapped back to the original class prior before
averaging.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import ScoreSet

SCORE_EPS = 1e-6
MISSING = {"", "na", "nan", "null", "none"}


class DataValidationError(ValueError):
    """Malformed or unusable input data; carries the offending location."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column


class ConvergenceWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class CampaignSchema:
    treatment: str
    outcome: str
    id: Optional[str] = None
    features: Optional[Sequence[str]] = None
    categorical: Sequence[str] = ()
    numeric: Sequence[str] = ()
    delimiter: str = ","

    @classmethod
    def from_json(cls, path) -> "CampaignSchema":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        try:
            return cls(**d)
        except TypeError as exc:
            raise DataValidationError(f"bad schema file {path}: {exc}") from None


@dataclass(frozen=True, eq=False)
class CampaignDataset:
    """Encoded campaign rows. Arrays are read-only after construction.

    ``X`` may contain NaN for missing numeric values; they are imputed with
    the training-split median when a model is fitted.
    """

    X: np.ndarray
    t: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    feature_names: tuple[str, ...] = ()
    levels: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n = X.shape[0]
        t = np.asarray(self.t)
        y = np.asarray(self.y)
        ids = np.asarray(self.ids).astype(str)
        if not (t.shape == y.shape == ids.shape == (n,)):
            raise DataValidationError("features, treatment, outcome and ids must have the same length")
        for name, col in (("treatment", t), ("outcome", y)):
            if not np.isin(col, (0, 1)).all():
                raise DataValidationError(f"{name} must be binary 0/1")
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataValidationError("feature_names does not match the feature width")
        t = t.astype(np.int8)
        y = y.astype(np.int8)
        for a in (X, t, y, ids):
            a.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "feature_names", names)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def width(self) -> int:
        return self.X.shape[1]

    @property
    def control_fraction(self) -> float:
        return float(np.mean(self.t == 0))

    def outcome_rate(self, arm: int) -> float:
        return float(self.y[self.t == arm].mean())

    def subset(self, idx) -> "CampaignDataset":
        idx = np.asarray(idx)
        return CampaignDataset(self.X[idx], self.t[idx], self.y[idx], self.ids[idx], self.feature_names, self.levels)


def _parse_float(cell: str) -> float:
    if cell.strip().lower() in MISSING:
        return math.nan
    return float(cell)


def _parse_binary(cell: str, row: int, column: str) -> int:
    try:
        v = float(cell)
    except ValueError:
        raise DataValidationError(f"non-binary value {cell!r}", row, column) from None
    if v not in (0.0, 1.0):
        raise DataValidationError(f"non-binary value {cell!r}", row, column)
    return int(v)


def load_campaign_csv(path, schema: CampaignSchema) -> CampaignDataset:
    """Read a campaign CSV with a header row.

    Numeric columns are kept as floats (missing -> NaN); categorical columns
    are one-hot encoded over their sorted observed levels. A column is
    categorical if listed in ``schema.categorical`` or, unless listed in
    ``schema.numeric``, if any non-missing cell fails to parse as a number.
    An auto-detected text column with a distinct value on every row is
    rejected as a probable identifier.
    Row numbers in errors are 1-based file lines (the header is line 1).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError(f"{path} is empty") from None
        rows = []
        for line, r in enumerate(reader, start=2):
            if not r or all(not c.strip() for c in r):
                continue
            if len(r) != len(header):
                raise DataValidationError(f"expected {len(header)} cells, found {len(r)}", line)
            rows.append((line, r))
    if not rows:
        raise DataValidationError(f"{path} has no data rows")

    col = {h: j for j, h in enumerate(header)}
    roles = [schema.treatment, schema.outcome] + ([schema.id] if schema.id else [])
    for name in roles + list(schema.features or ()) + list(schema.categorical) + list(schema.numeric):
        if name not in col:
            raise DataValidationError(f"unknown column {name!r}; header has {header}", column=name)
    features = list(schema.features) if schema.features is not None else [h for h in header if h not in roles]

    t = np.array([_parse_binary(r[col[schema.treatment]], ln, schema.treatment) for ln, r in rows])
    y = np.array([_parse_binary(r[col[schema.outcome]], ln, schema.outcome) for ln, r in rows])
    ids = [r[col[schema.id]] for _, r in rows] if schema.id else [str(i) for i in range(len(rows))]
    if len(set(ids)) != len(ids):
        raise DataValidationError("ids are not unique", column=schema.id)

    blocks, names, levels = [], [], {}
    for name in features:
        j = col[name]
        cells = [(ln, r[j]) for ln, r in rows]
        categorical = name in schema.categorical
        if not categorical:
            values = []
            for ln, c in cells:
                try:
                    values.append(_parse_float(c))
                except ValueError:
                    if name in schema.numeric:
                        raise DataValidationError(f"cannot parse {c!r} as a number", ln, name) from None
                    categorical = True
                    break
        if categorical:
            obs = [c.strip() for _, c in cells]
            lv = sorted({c for c in obs if c.lower() not in MISSING})
            if name not in schema.categorical and len(rows) > 20 and len(lv) == len(rows):
                raise DataValidationError(
                    "text column has a distinct value on every row; pass it as the id column "
                    "or list it as categorical explicitly", column=name)
            levels[name] = lv
            onehot = np.zeros((len(rows), len(lv)))
            pos = {v: k for k, v in enumerate(lv)}
            for i, c in enumerate(obs):
                if c in pos:
                    onehot[i, pos[c]] = 1.0
            blocks.append(onehot)
            names.extend(f"{name}={v}" for v in lv)
        else:
            blocks.append(np.asarray(values, dtype=float)[:, None])
            names.append(name)
    X = np.hstack(blocks) if blocks else np.zeros((len(rows), 0))
    return CampaignDataset(X, t, y, np.asarray(ids), tuple(names), levels)


# ---------------------------------------------------------------------------
# learner


@dataclass(frozen=True)
class ScoreModelSpec:
    """Configuration of the score learner.

    ``calibration_order`` is ``"each"`` (calibrate every base learner, then
    average) or ``"after"`` (average raw balanced scores, then calibrate).
    """

    kind: str = "two_model"
    balance: bool = True
    k: int = 10
    calibrate: bool = True
    calibration_order: str = "each"
    l2: float = 1.0
    max_iter: int = 100
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("two_model", "external"):
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.balance and self.k < 1:
            raise ValueError("EasyEnsemble needs k >= 1")
        if self.calibration_order not in ("each", "after"):
            raise ValueError(f"unknown calibration order {self.calibration_order!r}")
        if self.l2 < 0 or self.max_iter < 1:
            raise ValueError("l2 must be >= 0 and max_iter >= 1")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def fit_logistic(X: np.ndarray, y: np.ndarray, l2: float = 1.0, max_iter: int = 100, tol: float = 1e-8):
    """L2-penalised logistic regression by damped Newton steps.

    Minimises ``sum(logloss) + l2/2 * ||w||^2`` (intercept unpenalised).
    Returns ``(coef, intercept, converged)``.
    """
    n, p = X.shape
    Z = np.hstack([np.ones((n, 1)), X])
    penalty = np.full(p + 1, float(l2))
    penalty[0] = 0.0
    w = np.zeros(p + 1)
    ybar = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    w[0] = math.log(ybar / (1 - ybar))

    def objective(w):
        z = Z @ w
        return float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * np.sum(penalty * w * w))

    f = objective(w)
    for _ in range(max_iter):
        mu = _sigmoid(Z @ w)
        grad = Z.T @ (mu - y) + penalty * w
        if np.max(np.abs(grad)) <= tol * max(n, 1):
            return w[1:], w[0], True
        H = (Z * (mu * (1 - mu))[:, None]).T @ Z + np.diag(penalty + 1e-10)
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            w_new = w - t * step
            f_new = objective(w_new)
            if f_new <= f - 1e-4 * t * float(grad @ step) or t < 1e-10:
                break
            t *= 0.5
        if f - f_new <= tol * max(abs(f), 1.0) and np.max(np.abs(t * step)) <= tol:
            return w_new[1:], w_new[0], True
        w, f = w_new, f_new
    mu = _sigmoid(Z @ w)
    grad = Z.T @ (mu - y) + penalty * w
    return w[1:], w[0], bool(np.max(np.abs(grad)) <= 1e-5 * max(n, 1))


def undersampling_calibration(p_s, ratio: float):
    """Map a score from a model trained on negative-undersampled data back to the original prior.

    ``ratio`` is the fraction of negatives retained; ``p = r p_s / (r p_s - p_s + 1)``.
    """
    p_s = np.asarray(p_s, dtype=float)
    return ratio * p_s / (ratio * p_s - p_s + 1.0)


@dataclass(frozen=True)
class _Preprocess:
    median: np.ndarray
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "_Preprocess":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            med = np.nanmedian(X, axis=0) if X.shape[0] else np.zeros(X.shape[1])
        med = np.where(np.isnan(med), 0.0, med)
        Xi = np.where(np.isnan(X), med, X)
        mean = Xi.mean(axis=0)
        scale = Xi.std(axis=0)
        scale = np.where(scale > 1e-12, scale, 1.0)
        return cls(med, mean, scale)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return (np.where(np.isnan(X), self.median, X) - self.mean) / self.scale


@dataclass(frozen=True)
class ArmModel:
    """Probability model for one treatment arm: an average of base logistic fits."""

    coefs: np.ndarray  # (k, p)
    intercepts: np.ndarray  # (k,)
    ratios: np.ndarray  # retained fraction of the undersampled class, per base model
    minority: int  # label kept whole when balancing
    calibrate: bool
    calibration_order: str
    converged: bool

    def predict(self, Z: np.ndarray) -> np.ndarray:
        raw = _sigmoid(Z @ self.coefs.T + self.intercepts)  # (n, k)
        if not self.calibrate:
            p = raw.mean(axis=1)
        elif self.calibration_order == "each":
            p = self._calibrate(raw, self.ratios).mean(axis=1)
        else:
            p = self._calibrate(raw.mean(axis=1), float(self.ratios.mean()))
        return np.clip(p, SCORE_EPS, 1.0 - SCORE_EPS)

    def _calibrate(self, p, ratio):
        if self.minority == 1:
            return undersampling_calibration(p, ratio)
        return 1.0 - undersampling_calibration(1.0 - p, ratio)


@dataclass(frozen=True)
class ScoreModel:
    preprocess: _Preprocess
    arms: tuple[ArmModel, ArmModel]
    spec: ScoreModelSpec
    warnings: tuple[str, ...] = ()

    def predict(self, X) -> ScoreSet:
        Z = self.preprocess(X)
        return ScoreSet(self.arms[0].predict(Z), self.arms[1].predict(Z))


def check_occupancy(t, y, where: str = "training data") -> None:
    """Every (treatment, outcome) cell must hold at least one row."""
    t = np.asarray(t)
    y = np.asarray(y)
    for arm, name in ((0, "control"), (1, "treated")):
        if not np.any(t == arm):
            raise DataValidationError(f"{where}: the {name} group (t={arm}) is empty")
        for out in (0, 1):
            if not np.any((t == arm) & (y == out)):
                raise DataValidationError(f"{where}: no rows with t={arm}, y={out} ({name} group lacks outcome {out})")


def _fit_arm(Z, y, spec: ScoreModelSpec, seed_seq: np.random.SeedSequence) -> ArmModel:
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    minority, (small, large) = (1, (pos, neg)) if pos.size <= neg.size else (0, (neg, pos))
    if not spec.balance:
        w, b, ok = fit_logistic(Z, y, spec.l2, spec.max_iter, spec.tol)
        return ArmModel(w[None, :], np.array([b]), np.ones(1), minority, False, spec.calibration_order, ok)
    rng = np.random.default_rng(seed_seq)
    coefs, intercepts, ratios, ok_all = [], [], [], True
    m = min(small.size, large.size)
    for _ in range(spec.k):
        pick = np.sort(rng.choice(large, size=m, replace=False))
        idx = np.concatenate([small, pick])
        w, b, ok = fit_logistic(Z[idx], y[idx], spec.l2, spec.max_iter, spec.tol)
        coefs.append(w)
        intercepts.append(b)
        ratios.append(m / large.size)
        ok_all &= ok
    return ArmModel(
        np.asarray(coefs), np.asarray(intercepts), np.asarray(ratios), minority, spec.calibrate, spec.calibration_order, ok_all
    )


def train_two_model(train: CampaignDataset, spec: ScoreModelSpec = ScoreModelSpec()) -> ScoreModel:
    """Fit separate outcome models on the control and treated rows.

    Rows are put in id order before fitting, so the fitted model does not
    depend on the row order of ``train``.
    """
    if spec.kind != "two_model":
        raise ValueError("external scores are read from a score file, not trained")
    check_occupancy(train.t, train.y)
    order = np.argsort(train.ids, kind="stable")
    X, t, y = train.X[order], train.t[order], train.y[order]
    pre = _Preprocess.fit(X)
    Z = pre(X)
    arms, notes = [], []
    for arm, child in zip((0, 1), np.random.SeedSequence(spec.seed).spawn(2)):
        rows = t == arm
        model = _fit_arm(Z[rows], y[rows].astype(float), spec, child)
        if not model.converged:
            notes.append(f"arm t={arm}: did not converge within {spec.max_iter} iterations")
            warnings.warn(notes[-1], ConvergenceWarning, stacklevel=2)
        arms.append(model)
    return ScoreModel(pre, tuple(arms), spec, tuple(notes))


# ---------------------------------------------------------------------------
# splitting and cross-validation


@dataclass(frozen=True)
class ScoredRows:
    """Scores with row provenance. ``t``/``y`` may be None for bare score files."""

    scores: ScoreSet
    ids: np.ndarray
    t: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.scores)


def _stratified_assignment(ds: CampaignDataset, k: int, seed: int) -> np.ndarray:
    """Fold label per row, balanced within each (t, y) cell.

    Depends only on (id, t, y) of each row, not on row order.
    """
    order = np.argsort(ds.ids, kind="stable")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    fold = np.empty(len(ds), dtype=np.int64)
    offset = 0
    for arm in (0, 1):
        for out in (0, 1):
            cell = order[(ds.t[order] == arm) & (ds.y[order] == out)]
            perm = rng.permutation(cell.size)
            fold[cell[perm]] = (np.arange(cell.size) + offset) % k
            offset += cell.size
    return fold


def holdout_split(ds: CampaignDataset, test_fraction: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(ds.ids, kind="stable")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    test = np.zeros(len(ds), dtype=bool)
    for arm in (0, 1):
        for out in (0, 1):
            cell = order[(ds.t[order] == arm) & (ds.y[order] == out)]
            n_test = int(round(test_fraction * cell.size))
            test[cell[rng.permutation(cell.size)[:n_test]]] = True
    train_idx, test_idx = np.flatnonzero(~test), np.flatnonzero(test)
    check_occupancy(ds.t[train_idx], ds.y[train_idx], "training split")
    if test_idx.size == 0:
        raise DataValidationError("test split is empty")
    return train_idx, test_idx


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def cross_validate(
    dataset: CampaignDataset, spec: ScoreModelSpec, k_folds: int = 5, seed: int = 0, threads: int = 1
) -> ScoredRows:
    """Out-of-fold scores for every row, in input order."""
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    check_occupancy(dataset.t, dataset.y, "dataset")
    fold = _stratified_assignment(dataset, k_folds, seed)
    for f in range(k_folds):
        tr = fold != f
        check_occupancy(dataset.t[tr], dataset.y[tr], f"fold {f} training portion")

    def job(f):
        tr = np.flatnonzero(fold != f)
        te = np.flatnonzero(fold == f)
        model = train_two_model(dataset.subset(tr), replace(spec, seed=_fold_seed(spec.seed, f)))
        return te, model.predict(dataset.X[te])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(k_folds)))
    else:
        results = [job(f) for f in range(k_folds)]
    s0 = np.empty(len(dataset))
    s1 = np.empty(len(dataset))
    for te, sc in results:
        s0[te] = sc.s0
        s1[te] = sc.s1
    return ScoredRows(ScoreSet(s0, s1), dataset.ids, dataset.t, dataset.y)


# ---------------------------------------------------------------------------
# score files

SCORE_COLUMNS = ("id", "s0_hat", "s1_hat")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_score_file(path, scored: ScoredRows | ScoreSet) -> None:
    """Write ``id,s0_hat,s1_hat[,t,y]`` with 17 significant digits."""
    if isinstance(scored, ScoreSet):
        scored = ScoredRows(scored, np.arange(len(scored)).astype(str))
    echo = scored.t is not None and scored.y is not None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS + (("t", "y") if echo else ()))
        for i in range(len(scored)):
            row = [scored.ids[i], _fmt(scored.scores.s0[i]), _fmt(scored.scores.s1[i])]
            if echo:
                row += [int(scored.t[i]), int(scored.y[i])]
            w.writerow(row)


def read_score_file(path) -> ScoredRows:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError(f"score file {path} is empty") from None
        missing = [c for c in SCORE_COLUMNS if c not in header]
        if missing:
            raise DataValidationError(
                f"score file {path} lacks column(s) {missing}; required columns are {list(SCORE_COLUMNS)}"
            )
        col = {h: j for j, h in enumerate(header)}
        echo = "t" in col and "y" in col
        ids, s0, s1, t, y = [], [], [], [], []
        for line, r in enumerate(reader, start=2):
            if not r or all(not c.strip() for c in r):
                continue
            if len(r) != len(header):
                raise DataValidationError(f"expected {len(header)} cells, found {len(r)}", line)
            ids.append(r[col["id"]])
            for name, out in (("s0_hat", s0), ("s1_hat", s1)):
                try:
                    v = float(r[col[name]])
                except ValueError:
                    raise DataValidationError(f"cannot parse {r[col[name]]!r} as a score", line, name) from None
                if not (0.0 <= v <= 1.0):
                    raise DataValidationError(f"score {v!r} is outside [0, 1]", line, name)
                out.append(v)
            if echo:
                t.append(_parse_binary(r[col["t"]], line, "t"))
                y.append(_parse_binary(r[col["y"]], line, "y"))
    if not ids:
        raise DataValidationError(f"score file {path} has no data rows")
    return ScoredRows(
        ScoreSet(np.asarray(s0), np.asarray(s1)),
        np.asarray(ids),
        np.asarray(t, dtype=np.int8) if echo else None,
        np.asarray(y, dtype=np.int8) if echo else None,
    )
