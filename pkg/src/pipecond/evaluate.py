"""Error metrics, cross-validation, permutation importance, sensitivity sweeps
and the plot-data files behind the four result figures."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import NUMERIC, table_from_columns
from .errors import LengthMismatch, PipecondError, UnknownFeature, ZeroVariance
from .numeric import derive_seed


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mae: float
    r_square: float
    rae: float
    rrse: float
    mape: float
    n: int
    mape_excluded: int = 0

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _pair(y, yhat):
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if y.shape != yhat.shape:
        raise LengthMismatch(f"{y.shape[0]} actuals vs {yhat.shape[0]} predictions")
    if y.shape[0] == 0:
        raise LengthMismatch("empty prediction set")
    return y, yhat


def compute_metrics(y, yhat):
    """RMSE, R^2, MAE, RAE, RRSE and MAPE against this set's own mean.

    MAPE skips rows with a zero actual and reports how many it skipped.
    """
    y, yhat = _pair(y, yhat)
    n = y.shape[0]
    err = y - yhat
    sse = float(np.sum(err * err))
    sae = float(np.sum(np.abs(err)))
    dev = y - y.mean()
    sst = float(np.sum(dev * dev))
    sad = float(np.sum(np.abs(dev)))
    if sst == 0.0:
        raise ZeroVariance("all actual values are equal; R^2, RAE and RRSE are undefined")
    nz = y != 0
    mape = 100.0 * float(np.mean(np.abs(err[nz] / y[nz]))) if nz.any() else math.nan
    return MetricsReport(
        rmse=math.sqrt(sse / n),
        mae=sae / n,
        r_square=1.0 - sse / sst,
        rae=sae / sad,
        rrse=math.sqrt(sse / sst),
        mape=mape,
        n=n,
        mape_excluded=int(n - nz.sum()),
    )


# --------------------------------------------------------------------------
# cross-validation


@dataclass
class CrossValidationResult:
    folds: list
    mean: dict
    std: dict
    pooled: MetricsReport | None = None  # metrics over all out-of-fold predictions
    predictions: np.ndarray | None = None

    def to_dict(self):
        return {"folds": [f.to_dict() for f in self.folds], "mean": self.mean, "std": self.std,
                "pooled": self.pooled.to_dict() if self.pooled is not None else None}


def _with_fold(exc, f):
    exc.fold = f
    exc.args = (f"fold {f}: {exc.args[0] if exc.args else ''}",) + exc.args[1:]
    return exc


def cross_validate(recipe, table, plan, seed=42, per_fold=True):
    """Fit ``recipe(train_table, seed)`` on all-but-fold-f, score on fold f.

    The recipe must return an object with ``target`` and ``predict_table``;
    any transforms it needs are fitted inside the call, so evaluation rows
    never reach them. Fold f receives ``derive_seed(seed, f)``.

    With ``per_fold=False`` only the pooled out-of-fold metrics are computed,
    which is the usable summary for leave-one-out plans where every fold has
    a single row and per-fold R^2 is undefined.
    """
    if plan.n != table.n_rows:
        raise LengthMismatch(f"fold plan covers {plan.n} rows, table has {table.n_rows}")
    reports = []
    y_all = np.empty(table.n_rows)
    pred_all = np.empty(table.n_rows)
    for f in range(plan.k):
        rows = np.sort(plan.folds[f])
        held = table.take(rows)
        try:
            model = recipe(table.take(plan.train_indices(f)), derive_seed(seed, f))
            y_f, p_f = model.target(held), model.predict_table(held)
            y_all[rows], pred_all[rows] = y_f, p_f
            if per_fold:
                reports.append(compute_metrics(y_f, p_f))
        except PipecondError as exc:
            raise _with_fold(exc, f)
    keys = [k for k in MetricsReport.__dataclass_fields__ if k not in ("n", "mape_excluded")]
    values = {k: np.array([getattr(r, k) for r in reports]) for k in keys} if reports else {}
    return CrossValidationResult(
        reports,
        {k: float(v.mean()) for k, v in values.items()},
        {k: float(v.std(ddof=1)) if len(v) > 1 else 0.0 for k, v in values.items()},
        compute_metrics(y_all, pred_all),
        pred_all,
    )


# --------------------------------------------------------------------------
# permutation importance


@dataclass
class FeatureImportance:
    name: str
    score: float
    std: float
    rank: int = 0
    repeats_scores: list = field(default_factory=list)


@dataclass
class ImportanceReport:
    features: list
    repeats: int
    baseline: float
    metric: str = "rmse"

    def by_name(self):
        return {f.name: f for f in self.features}

    def ranked(self):
        return sorted(self.features, key=lambda f: f.rank)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "importance", "std", "rank"])
            for f in self.ranked():
                w.writerow([f.name, repr(f.score), repr(f.std), f.rank])


def _rmse(y, yhat):
    d = y - yhat
    return math.sqrt(float(np.mean(d * d)))


def permutation_importance(predict, X, y, r, repeats=10, groups=None, metric="rmse"):
    """Mean increase in RMSE when a feature's columns are shuffled together.

    ``groups`` maps feature name to column indices (one-hot blocks move as
    a unit); by default every column is its own feature named ``x<j>``.
    Rank 1 is the most important; ties keep the order of ``groups``.
    """
    if metric != "rmse":
        raise ValueError("only the rmse metric is supported")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if groups is None:
        groups = {f"x{j}": [j] for j in range(X.shape[1])}
    baseline = _rmse(y, predict(X))
    feats = []
    for name, cols in groups.items():
        scores = []
        for _ in range(repeats):
            perm = r.shuffle(X.shape[0])
            Xp = X.copy()
            Xp[:, cols] = X[perm][:, cols]
            scores.append(_rmse(y, predict(Xp)) - baseline)
        arr = np.array(scores)
        feats.append(FeatureImportance(name, float(arr.mean()),
                                       float(arr.std(ddof=1)) if repeats > 1 else 0.0,
                                       repeats_scores=scores))
    order = sorted(range(len(feats)), key=lambda i: (-feats[i].score, i))
    for rank, i in enumerate(order, start=1):
        feats[i].rank = rank
    return ImportanceReport(feats, repeats, baseline, metric)


# --------------------------------------------------------------------------
# sensitivity


@dataclass(frozen=True, eq=False)
class SensitivityCurve:
    feature: str
    grid: np.ndarray
    outputs: np.ndarray
    held_at: dict

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([self.feature, "prediction"])
            for g, o in zip(self.grid, self.outputs):
                w.writerow([repr(float(g)), repr(float(o))])


def _modal(labels):
    counts = {}
    for lab in labels:
        if lab is not None:
            counts[lab] = counts.get(lab, 0) + 1
    # first-seen order breaks ties
    return max(counts, key=lambda k: counts[k]) if counts else None


def sensitivity_analysis(model, table, feature, grid_size=25):
    """Sweep one feature over its observed training range.

    Other numeric features are held at their means and categorical features
    at their modal level. A categorical feature is swept over its observed
    levels (sorted numerically when they are integer codes).
    """
    if feature not in model.features:
        raise UnknownFeature(f"model has no feature {feature!r}")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    kind = table.column_schema(feature).kind
    if kind == NUMERIC:
        col = table.numeric(feature)
        grid = np.linspace(np.nanmin(col), np.nanmax(col), grid_size)
        values = grid
    else:
        levels = sorted({v for v in table.column(feature) if v is not None},
                        key=lambda s: (float(s) if _is_number(s) else math.inf, s))
        values = np.array(levels, dtype=object)
        grid = np.array([float(s) if _is_number(s) else i for i, s in enumerate(levels)])
    m = len(values)
    held, data = {}, {}
    for c in table.schema:
        if c.name == feature:
            data[c.name] = values
        elif c.kind == NUMERIC:
            mean = float(np.nanmean(table.numeric(c.name)))
            held[c.name] = mean
            data[c.name] = np.full(m, mean)
        else:
            mode = _modal(table.column(c.name))
            held[c.name] = mode
            data[c.name] = np.array([mode] * m, dtype=object)
    probe = table_from_columns(data, table.schema, source="sensitivity")
    return SensitivityCurve(feature, grid, np.asarray(model.predict_table(probe)), held)


def _is_number(s):
    try:
        float(s)
    except (TypeError, ValueError):
        return False
    return True


# --------------------------------------------------------------------------
# plot data


@dataclass(frozen=True, eq=False)
class ErrorHistogram:
    edges: np.ndarray
    counts: np.ndarray
    mean_error: float
    std_error: float

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_low", "bin_high", "count"])
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def error_histogram(y, yhat, bins=20):
    """Histogram of ``yhat - y`` over ``bins`` equal-width bins on [min, max].

    Bins are right-open except the last. A zero-width range is widened to
    +-0.5 around the single value.
    """
    y, yhat = _pair(y, yhat)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    e = yhat - y
    counts, edges = np.histogram(e, bins=bins)
    return ErrorHistogram(edges, counts, float(e.mean()), float(e.std()))


def write_scatter(path, y, yhat):
    y, yhat = _pair(y, yhat)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["actual", "predicted"])
        for a, p in zip(y, yhat):
            w.writerow([repr(float(a)), repr(float(p))])


def smoothed(values, window=5):
    """Trailing moving average (``valid`` positions only)."""
    v = np.asarray(values, dtype=float)
    if len(v) < window:
        return v.copy()
    return np.convolve(v, np.ones(window) / window, mode="valid")
