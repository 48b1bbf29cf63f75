"""Feature transforms and design-matrix assembly for the two model paths."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import CATEGORICAL_FEATURES, NUMERIC_FEATURES, TARGET
from .errors import ConstantColumn, DataError, DegenerateInput

log = logging.getLogger(__name__)

MLR_NUMERIC = "mlr_numeric"
ANN_ONEHOT = "ann_onehot"


@dataclass(frozen=True, eq=False)
class ScalerParams:
    columns: tuple
    mean: np.ndarray
    std: np.ndarray

    def transform(self, M):
        return (np.asarray(M, dtype=float) - self.mean) / self.std

    def inverse_transform(self, Z):
        return np.asarray(Z, dtype=float) * self.std + self.mean

    def to_dict(self):
        return {"columns": list(self.columns), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["columns"]), np.array(d["mean"], dtype=float),
                   np.array(d["std"], dtype=float))


def fit_standardizer(train, columns=None):
    """z-score parameters from the training matrix; population (ddof=0) stddev."""
    train = np.asarray(train, dtype=float)
    if train.ndim != 2 or train.shape[0] == 0:
        raise DegenerateInput("standardizer needs a non-empty 2-D training matrix")
    if columns is None:
        columns = tuple(f"x{j}" for j in range(train.shape[1]))
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    for j, name in enumerate(columns):
        if std[j] <= 1e-12 * max(1.0, abs(mean[j])):
            raise ConstantColumn(name)
    return ScalerParams(tuple(columns), mean, std)


def fit_apply_standardizer(train, *apply_to, columns=None):
    params = fit_standardizer(train, columns)
    return params, [params.transform(train)] + [params.transform(m) for m in apply_to]


@dataclass(frozen=True)
class UnseenLabel:
    column: str
    row: int
    label: str


@dataclass(frozen=True)
class EncoderMap:
    levels: dict = field(default_factory=dict)  # column -> tuple of labels, first-seen order

    def to_dict(self):
        return {k: list(v) for k, v in self.levels.items()}

    @classmethod
    def from_dict(cls, d):
        return cls({k: tuple(v) for k, v in d.items()})


def fit_levels(labels):
    seen = {}
    for lab in labels:
        if lab is not None and lab not in seen:
            seen[lab] = None
    return tuple(seen)


def one_hot(labels, levels, column="?"):
    """Indicator matrix; unseen labels give an all-zero row and a warning record."""
    index = {lab: j for j, lab in enumerate(levels)}
    out = np.zeros((len(labels), len(levels)))
    warnings = []
    for i, lab in enumerate(labels):
        j = index.get(lab)
        if j is None:
            warnings.append(UnseenLabel(column, i, lab))
            log.warning("unseen label %r in column %s, row %d", lab, column, i)
        else:
            out[i, j] = 1.0
    return out, warnings


def one_hot_encode(train_labels, apply_to=None, levels=None, column="?"):
    """Fit levels on ``train_labels`` (unless given) and encode ``apply_to``.

    Returns ``(levels, matrix, warnings)``; encodes the training labels when
    ``apply_to`` is None.
    """
    if levels is None:
        levels = fit_levels(train_labels)
    target = train_labels if apply_to is None else apply_to
    matrix, warnings = one_hot(target, levels, column)
    return levels, matrix, warnings


@dataclass(frozen=True)
class DesignMatrixSpec:
    mode: str = MLR_NUMERIC
    numeric: tuple = NUMERIC_FEATURES
    categorical: tuple = CATEGORICAL_FEATURES
    target: str = TARGET

    def __post_init__(self):
        if self.mode not in (MLR_NUMERIC, ANN_ONEHOT):
            raise ValueError(f"unknown design mode {self.mode!r}")

    @property
    def intercept(self):
        return self.mode == MLR_NUMERIC

    @property
    def features(self):
        return tuple(self.numeric) + tuple(self.categorical)

    def to_dict(self):
        return {"mode": self.mode, "numeric": list(self.numeric),
                "categorical": list(self.categorical), "target": self.target,
                "intercept": self.intercept}

    @classmethod
    def from_dict(cls, d):
        return cls(d["mode"], tuple(d["numeric"]), tuple(d["categorical"]), d["target"])


@dataclass(frozen=True, eq=False)
class Design:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple
    groups: dict  # source feature -> column indices in X
    scaler: ScalerParams | None = None
    encoder: EncoderMap | None = None
    warnings: tuple = ()


def _numeric_block(t, names):
    if not names:
        return np.empty((t.n_rows, 0))
    M = np.column_stack([t.numeric(c) for c in names])
    if np.isnan(M).any():
        raise DataError("missing numeric values in design columns; clean the table first")
    return M


def _category_codes(t, name):
    codes = []
    for lab in t.column(name):
        try:
            codes.append(float(lab))
        except (TypeError, ValueError):
            raise DataError(f"{name} label {lab!r} is not an integer code") from None
    return np.array(codes)


def assemble_design(t, spec=DesignMatrixSpec(), scaler=None, encoder=None):
    """Design matrix, target vector and feature names for ``spec.mode``.

    Transforms not supplied are fitted on ``t``; pass the training-set
    ``scaler``/``encoder`` when assembling evaluation data.
    """
    if t.n_rows == 0:
        raise DegenerateInput("cannot assemble a design matrix from an empty table")
    y = np.asarray(t.numeric(spec.target), dtype=float)
    raw = _numeric_block(t, spec.numeric)
    blocks, names, groups = [], [], {}

    if spec.mode == MLR_NUMERIC:
        blocks.append(np.ones((t.n_rows, 1)))
        names.append("Intercept")
        blocks.append(raw)
        for c in spec.numeric:
            groups[c] = [len(names)]
            names.append(c)
        for c in spec.categorical:
            blocks.append(_category_codes(t, c)[:, None])
            groups[c] = [len(names)]
            names.append(c)
        X = np.hstack(blocks)
        return Design(X, y, tuple(names), groups)

    if spec.numeric:
        if scaler is None:
            scaler = fit_standardizer(raw, spec.numeric)
        blocks.append(scaler.transform(raw))
        for c in spec.numeric:
            groups[c] = [len(names)]
            names.append(c)
    levels = dict(encoder.levels) if encoder is not None else {}
    warnings = []
    for c in spec.categorical:
        labels = t.column(c)
        if c not in levels:
            levels[c] = fit_levels(labels)
        M, w = one_hot(labels, levels[c], c)
        warnings.extend(w)
        blocks.append(M)
        groups[c] = list(range(len(names), len(names) + len(levels[c])))
        names.extend(f"{c}={lab}" for lab in levels[c])
    X = np.hstack(blocks)
    return Design(X, y, tuple(names), groups, scaler, EncoderMap(levels), tuple(warnings))
