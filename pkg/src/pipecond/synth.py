"""Synthetic pipe inventories generated from the published regression.

Feature distributions are artifact conventions, not properties of any real
inspection dataset. Draw order for ``generate`` is fixed: one block of ``n``
draws per feature in ``FEATURE_ORDER``, then ``n`` noise variates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import (
    CATEGORICAL,
    DEFAULT_SCHEMA,
    TARGET,
    Provenance,
    Table,
)
from .errors import InvalidRange
from .numeric import RandomSource

FEATURE_ORDER = ("AGE", "PIPEDIA", "LENGTH", "DEPTH", "SEGMENTSL", "SOILTYPE")

# Intercept first, then FEATURE_ORDER.
PUBLISHED_COEFFICIENTS = (
    -6.659801,
    0.09120619,
    0.04544334,
    0.00624929,
    0.00823641,
    11.5807336,
    0.07735169,
)
PUBLISHED_NOISE_SIGMA = 0.531162481


@dataclass(frozen=True)
class FeatureRange:
    """``uniform`` on [lo, hi] or ``integer`` uniform on {lo, ..., hi}."""

    kind: str
    lo: float
    hi: float

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}

    @property
    def variance(self):
        if self.kind == "uniform":
            return (self.hi - self.lo) ** 2 / 12.0
        k = self.hi - self.lo + 1
        return (k * k - 1) / 12.0


DEFAULT_RANGES = {
    "AGE": FeatureRange("uniform", 1.0, 100.0),
    "PIPEDIA": FeatureRange("integer", 8, 60),
    "LENGTH": FeatureRange("uniform", 50.0, 500.0),
    "DEPTH": FeatureRange("uniform", 3.0, 30.0),
    "SEGMENTSL": FeatureRange("uniform", 0.001, 0.02),
    "SOILTYPE": FeatureRange("integer", 1, 5),
}


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 612
    seed: int = 42
    coefficients: tuple = PUBLISHED_COEFFICIENTS
    noise_sigma: float = PUBLISHED_NOISE_SIGMA
    ranges: dict = field(default_factory=lambda: dict(DEFAULT_RANGES))
    clamp_target: tuple | None = None

    def validate(self):
        if self.n < 1:
            raise InvalidRange(f"n must be >= 1, got {self.n}")
        if self.noise_sigma < 0:
            raise InvalidRange("noise_sigma must be non-negative")
        if len(self.coefficients) != len(FEATURE_ORDER) + 1:
            raise InvalidRange(f"expected {len(FEATURE_ORDER) + 1} coefficients")
        for name in FEATURE_ORDER:
            rng = self.ranges.get(name)
            if rng is None:
                raise InvalidRange(f"no range for {name}")
            if rng.kind not in ("uniform", "integer") or not rng.lo <= rng.hi:
                raise InvalidRange(f"bad range for {name}: {rng}")
        if self.clamp_target is not None and not self.clamp_target[0] <= self.clamp_target[1]:
            raise InvalidRange("clamp_target must satisfy lo <= hi")

    def provenance(self):
        return {
            "seed": self.seed,
            "n": self.n,
            "coefficients": dict(zip(("Intercept",) + FEATURE_ORDER, self.coefficients)),
            "noise_sigma": self.noise_sigma,
            "ranges": {k: self.ranges[k].to_dict() for k in FEATURE_ORDER},
            "clamp_target": list(self.clamp_target) if self.clamp_target else None,
            "algorithm_id": RandomSource.algorithm_id,
            "note": "feature distributions are artifact conventions",
        }


def variance_contributions(config=GeneratorConfig()):
    """Analytic Var(beta_j * x_j) for each feature under independent draws."""
    return {name: config.coefficients[j + 1] ** 2 * config.ranges[name].variance
            for j, name in enumerate(FEATURE_ORDER)}


def generate(config=GeneratorConfig()):
    config.validate()
    r = RandomSource(config.seed)
    n = config.n
    features = {}
    for name in FEATURE_ORDER:
        rng = config.ranges[name]
        if rng.kind == "uniform":
            features[name] = rng.lo + (rng.hi - rng.lo) * r.uniform(n)
        else:
            features[name] = r.integers(int(rng.lo), int(rng.hi), n).astype(float)
    noise = r.standard_normal(n)
    beta = np.asarray(config.coefficients, dtype=float)
    X = np.column_stack([np.ones(n)] + [features[c] for c in FEATURE_ORDER])
    y = X @ beta + config.noise_sigma * noise
    if config.clamp_target is not None:
        y = np.clip(y, *config.clamp_target)

    cols = {}
    for c in DEFAULT_SCHEMA:
        if c.name == TARGET:
            cols[c.name] = y
        elif c.kind == CATEGORICAL:
            cols[c.name] = np.array([str(int(v)) for v in features[c.name]], dtype=object)
        else:
            cols[c.name] = features[c.name]
    return Table(DEFAULT_SCHEMA, cols, np.arange(n, dtype=np.int64), Provenance("synthetic", n))


@dataclass(frozen=True)
class PathologySpec:
    missing_fraction: float = 0.0
    outlier_count: int = 0
    outlier_scale: float = 50.0
    outlier_columns: tuple = ("LENGTH",)
    # None blanks cells in every column
    missing_columns: tuple | None = None


def inject_pathologies(t, spec, r):
    """Multiply ``outlier_count`` random rows by ``outlier_scale`` in the outlier
    columns, then blank each eligible cell independently with probability
    ``missing_fraction``. Affected rows are tagged in the provenance."""
    if not 0.0 <= spec.missing_fraction < 1.0:
        raise InvalidRange("missing_fraction must lie in [0, 1)")
    if spec.outlier_count > t.n_rows:
        raise InvalidRange("more outliers requested than rows")
    tags = {k: list(v) for k, v in t.provenance.tags.items()}
    cols = {k: v.copy() for k, v in t.columns.items()}

    if spec.outlier_count > 0:
        rows = r.shuffle(t.n_rows)[: spec.outlier_count]
        for name in spec.outlier_columns:
            t.numeric(name)
            cols[name][rows] *= spec.outlier_scale
            for i in rows:
                tags.setdefault(int(t.row_ids[i]), []).append(f"outlier:{name}")

    if spec.missing_fraction > 0:
        names = spec.missing_columns or tuple(t.names)
        blank = r.uniform((t.n_rows, len(names))) < spec.missing_fraction
        for j, name in enumerate(names):
            kind = t.column_schema(name).kind
            for i in np.flatnonzero(blank[:, j]):
                cols[name][i] = np.nan if kind != CATEGORICAL else None
                tags.setdefault(int(t.row_ids[i]), []).append(f"missing:{name}")

    return Table(t.schema, cols, t.row_ids.copy(), replace(t.provenance, tags=tags))
