"""Pipe-inventory tables: CSV ingestion, cleaning rules and partitions."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ColumnNotNumeric,
    DegenerateSplit,
    EmptyFile,
    InvalidK,
    MissingColumn,
    ParseError,
    SingularCovariance,
    TooFewRows,
)
from .numeric import RandomSource, chi2_quantile, rng_shuffle

NUMERIC = "numeric"
CATEGORICAL = "categorical"
MISSING_TOKENS = frozenset({"", "na", "n/a"})

TARGET = "PACPRATING"
NUMERIC_FEATURES = ("AGE", "PIPEDIA", "LENGTH", "DEPTH", "SEGMENTSL")
CATEGORICAL_FEATURES = ("SOILTYPE",)


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str = NUMERIC
    required: bool = True

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise ValueError(f"unknown column kind {self.kind!r}")


DEFAULT_SCHEMA = tuple(
    [ColumnSchema(name) for name in NUMERIC_FEATURES]
    + [ColumnSchema(name, CATEGORICAL) for name in CATEGORICAL_FEATURES]
    + [ColumnSchema(TARGET)]
)


@dataclass(frozen=True)
class DropRecord:
    row_id: int
    reason: str


@dataclass(frozen=True)
class Provenance:
    source: str | None
    input_rows: int
    drops: tuple[DropRecord, ...] = ()
    # row_id -> tags attached by pathology injection
    tags: dict = field(default_factory=dict)

    def with_drops(self, records):
        return replace(self, drops=self.drops + tuple(records))


@dataclass(frozen=True, eq=False)
class Table:
    """Column-oriented table.

    Numeric columns are float arrays with NaN for missing cells; categorical
    columns are object arrays of normalised strings with None for missing.
    ``row_ids`` are positions in the originally loaded file and survive every
    subsetting operation.
    """

    schema: tuple[ColumnSchema, ...]
    columns: dict
    row_ids: np.ndarray
    provenance: Provenance

    def __post_init__(self):
        names = [c.name for c in self.schema]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names in schema")
        for arr in self.columns.values():
            arr.flags.writeable = False
        self.row_ids.flags.writeable = False

    @property
    def n_rows(self):
        return len(self.row_ids)

    def __len__(self):
        return self.n_rows

    @property
    def names(self):
        return [c.name for c in self.schema]

    def column_schema(self, name):
        for c in self.schema:
            if c.name == name:
                return c
        raise MissingColumn(f"no column {name!r}")

    def column(self, name):
        self.column_schema(name)
        return self.columns[name]

    def numeric(self, name):
        if self.column_schema(name).kind != NUMERIC:
            raise ColumnNotNumeric(f"column {name!r} is not numeric")
        return self.columns[name]

    def missing_mask(self, name):
        col = self.columns[name]
        if self.column_schema(name).kind == NUMERIC:
            return np.isnan(col)
        return np.array([v is None for v in col], dtype=bool)

    def take(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        cols = {k: v[idx].copy() for k, v in self.columns.items()}
        return Table(self.schema, cols, self.row_ids[idx].copy(), self.provenance)

    def drop(self, mask, reasons):
        """Remove rows where ``mask`` is set, logging ``reasons[i]`` for each."""
        mask = np.asarray(mask, dtype=bool)
        records = [DropRecord(int(self.row_ids[i]), reasons[i]) for i in np.flatnonzero(mask)]
        kept = self.take(np.flatnonzero(~mask))
        return replace(kept, provenance=self.provenance.with_drops(records))

    def with_columns(self, **updates):
        cols = dict(self.columns)
        for k, v in updates.items():
            self.column_schema(k)
            cols[k] = np.array(v, dtype=self.columns[k].dtype, copy=True)
        return replace(self, columns=cols)

    def reconciles(self):
        return self.n_rows + len(self.provenance.drops) == self.provenance.input_rows

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.names)
            for i in range(self.n_rows):
                writer.writerow([_format_cell(self.columns[c.name][i], c.kind) for c in self.schema])


def _format_cell(value, kind):
    if kind == NUMERIC:
        return "" if math.isnan(value) else repr(float(value))
    return "" if value is None else value


def table_from_columns(data, schema=DEFAULT_SCHEMA, source=None):
    """Build a Table from a mapping ``name -> sequence``."""
    lengths = {len(data[c.name]) for c in schema}
    if len(lengths) > 1:
        raise ValueError("columns of unequal length")
    n = lengths.pop() if lengths else 0
    cols = {}
    for c in schema:
        if c.kind == NUMERIC:
            cols[c.name] = np.asarray(data[c.name], dtype=float).copy()
        else:
            cols[c.name] = np.array([_normalize_label(v) for v in data[c.name]], dtype=object)
    return Table(tuple(schema), cols, np.arange(n, dtype=np.int64), Provenance(source, n))


def _normalize_label(value):
    if value is None:
        return None
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)) and float(value).is_integer():
        return str(int(value))
    text = str(value).strip().casefold()
    return None if text in MISSING_TOKENS else text


def _parse_numeric(token):
    text = token.strip()
    if text.casefold() in MISSING_TOKENS:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        return math.nan
    return value if math.isfinite(value) else math.nan


def load_table(path, schema=DEFAULT_SCHEMA):
    path = Path(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} is empty") from None
        lookup = {}
        for pos, name in enumerate(header):
            lookup.setdefault(name.strip().casefold(), pos)
        positions = {}
        for c in schema:
            pos = lookup.get(c.name.strip().casefold())
            if pos is None and c.required:
                raise MissingColumn(f"required column {c.name!r} not in header of {path}")
            positions[c.name] = pos

        raw = {c.name: [] for c in schema}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=lineno)
            for c in schema:
                pos = positions[c.name]
                token = "" if pos is None else row[pos]
                if c.kind == NUMERIC:
                    raw[c.name].append(_parse_numeric(token))
                else:
                    raw[c.name].append(_normalize_label(token))

    n = len(raw[schema[0].name]) if schema else 0
    cols = {}
    for c in schema:
        if c.kind == NUMERIC:
            cols[c.name] = np.array(raw[c.name], dtype=float)
        else:
            cols[c.name] = np.array(raw[c.name], dtype=object)
    return Table(tuple(schema), cols, np.arange(n, dtype=np.int64), Provenance(str(path), n))


def drop_incomplete(t):
    """Remove rows with a missing value in any required column."""
    reasons = [None] * t.n_rows
    for c in t.schema:
        if not c.required:
            continue
        for i in np.flatnonzero(t.missing_mask(c.name)):
            if reasons[i] is None:
                reasons[i] = f"missing:{c.name}"
    mask = np.array([r is not None for r in reasons], dtype=bool)
    return t.drop(mask, reasons)


def iqr_fences(values, whisker=1.5):
    q1, q3 = np.quantile(values, [0.25, 0.75], method="linear")
    if math.isinf(whisker):
        return -math.inf, math.inf
    iqr = q3 - q1
    return q1 - whisker * iqr, q3 + whisker * iqr


def flag_outliers_iqr(t, columns, whisker=1.5):
    """Tukey boxplot rule; a row is flagged if any listed column is outside its fences."""
    flags = np.zeros(t.n_rows, dtype=bool)
    for name in columns:
        col = t.numeric(name)
        present = ~np.isnan(col)
        if not present.any():
            continue
        lo, hi = iqr_fences(col[present], whisker)
        with np.errstate(invalid="ignore"):
            flags |= present & ((col < lo) | (col > hi))
    return flags


def mahalanobis_d2(X):
    """Squared Mahalanobis distance of each row from the column means (ddof=1 covariance)."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < p + 1:
        raise TooFewRows(f"need at least {p + 1} rows, got {n}")
    centered = X - X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance("sample covariance is not positive definite") from None
    diag = np.diag(chol)
    if diag.min() <= 1e-10 * diag.max():
        raise SingularCovariance("sample covariance is numerically singular")
    z = np.linalg.solve(chol, centered.T)
    return np.sum(z * z, axis=0)


def flag_outliers_mahalanobis(t, columns, quantile=0.975):
    X = np.column_stack([t.numeric(c) for c in columns])
    complete = ~np.isnan(X).any(axis=1)
    flags = np.zeros(t.n_rows, dtype=bool)
    d2 = mahalanobis_d2(X[complete])
    flags[complete] = d2 > chi2_quantile(quantile, len(columns))
    return flags


@dataclass(frozen=True)
class CleaningConfig:
    iqr: bool = True
    whisker: float = 1.5
    mahalanobis: bool = True
    quantile: float = 0.975
    # None means every numeric column, target included
    columns: tuple | None = None


def clean(t, config=CleaningConfig()):
    """Missing-row removal, then IQR flags, then Mahalanobis on the IQR survivors."""
    t = drop_incomplete(t)
    columns = config.columns
    if columns is None:
        columns = tuple(c.name for c in t.schema if c.kind == NUMERIC)
    if t.n_rows == 0 or not columns:
        return t
    reasons = [None] * t.n_rows
    if config.iqr:
        for i in np.flatnonzero(flag_outliers_iqr(t, columns, config.whisker)):
            reasons[i] = "outlier:iqr"
    if config.mahalanobis:
        survivors = np.array([r is None for r in reasons], dtype=bool)
        sub = t.take(np.flatnonzero(survivors))
        flags = flag_outliers_mahalanobis(sub, columns, config.quantile)
        for i in np.flatnonzero(survivors)[flags]:
            reasons[i] = "outlier:mahalanobis"
    mask = np.array([r is not None for r in reasons], dtype=bool)
    return t.drop(mask, reasons)


def write_drop_log(t, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_id", "reason"])
        for rec in t.provenance.drops:
            writer.writerow([rec.row_id, rec.reason])


# --------------------------------------------------------------------------
# partitions


@dataclass(frozen=True, eq=False)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int
    train_fraction: float


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    folds: tuple
    seed: int

    @property
    def n(self):
        return sum(len(f) for f in self.folds)

    def train_indices(self, f):
        return np.sort(np.concatenate([self.folds[g] for g in range(self.k) if g != f]))


def _count(t_or_n):
    return t_or_n if isinstance(t_or_n, (int, np.integer)) else t_or_n.n_rows


def train_test_split(t, train_fraction=0.8, seed=42):
    n = _count(t)
    if not (0.0 < train_fraction < 1.0):
        raise DegenerateSplit(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = int(math.floor(train_fraction * n + 0.5))
    if n < 2 or n_train == 0 or n_train == n:
        raise DegenerateSplit(f"split of {n} rows at {train_fraction} leaves one side empty")
    perm = rng_shuffle(RandomSource(seed), n)
    return SplitIndices(perm[:n_train].copy(), perm[n_train:].copy(), seed, train_fraction)


def k_fold_plan(n, k, seed=42):
    """Shuffle, then deal indices round-robin into ``k`` folds."""
    if not (2 <= k <= n):
        raise InvalidK(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = rng_shuffle(RandomSource(seed), n)
    return FoldPlan(k, tuple(perm[f::k].copy() for f in range(k)), seed)
