import numpy as np
import pytest
from scipy import stats

from oracles import variance_contributions as oracle_contributions
from pipecond.dataset import CleaningConfig, clean, flag_outliers_iqr
from pipecond.errors import InvalidRange
from pipecond.mlr import fit_ols
from pipecond.numeric import RandomSource
from pipecond.preprocess import assemble_design
from pipecond.synth import (
    DEFAULT_RANGES,
    FEATURE_ORDER,
    PUBLISHED_COEFFICIENTS,
    FeatureRange,
    GeneratorConfig,
    PathologySpec,
    generate,
    inject_pathologies,
    variance_contributions,
)


def test_noiseless_single_row_is_exact_dot_product():
    t = generate(GeneratorConfig(n=1, noise_sigma=0.0, seed=3))
    x = [1.0] + [float(t.column(c)[0]) for c in FEATURE_ORDER]
    assert t.numeric("PACPRATING")[0] == float(np.dot(x, PUBLISHED_COEFFICIENTS))


def test_same_seed_same_table():
    a, b = generate(GeneratorConfig(n=50, seed=9)), generate(GeneratorConfig(n=50, seed=9))
    for c in a.names:
        assert a.column(c).tolist() == b.column(c).tolist()
    assert generate(GeneratorConfig(n=50, seed=10)).numeric("AGE").tolist() != a.numeric("AGE").tolist()


def test_feature_ranges_respected():
    t = generate(GeneratorConfig(n=2000, seed=1))
    for name, r in DEFAULT_RANGES.items():
        col = np.array([float(v) for v in t.column(name)])
        assert col.min() >= r.lo and col.max() <= r.hi
        if r.kind == "integer":
            assert set(col.tolist()) == set(float(v) for v in range(int(r.lo), int(r.hi) + 1))


def test_noiseless_fit_recovers_coefficients():
    t = generate(GeneratorConfig(n=300, noise_sigma=0.0, seed=4))
    fit = fit_ols(assemble_design(t).X, t.numeric("PACPRATING"))
    assert fit.anova.ss_residual < 1e-16 * 300
    np.testing.assert_allclose(fit.coefficients, PUBLISHED_COEFFICIENTS, rtol=1e-8)


def test_target_variance_decomposition():
    cfg = GeneratorConfig(n=200_000, seed=5)
    y = generate(cfg).numeric("PACPRATING")
    expected = sum(variance_contributions(cfg).values()) + cfg.noise_sigma**2
    assert y.var() == pytest.approx(expected, rel=0.05)


def test_variance_contributions_match_oracle():
    cfg = GeneratorConfig()
    coefs = dict(zip(FEATURE_ORDER, cfg.coefficients[1:]))
    ranges = {k: (v.kind, v.lo, v.hi) for k, v in cfg.ranges.items()}
    ref = oracle_contributions(coefs, ranges)
    got = variance_contributions(cfg)
    for k in FEATURE_ORDER:
        assert got[k] == pytest.approx(ref[k], rel=1e-14)
    assert max(got, key=got.get) == "AGE"


def test_clamp_and_validation():
    t = generate(GeneratorConfig(n=300, seed=6, clamp_target=(0.0, 5.0)))
    y = t.numeric("PACPRATING")
    assert y.min() >= 0.0 and y.max() <= 5.0
    bad = [
        GeneratorConfig(n=0),
        GeneratorConfig(noise_sigma=-1.0),
        GeneratorConfig(clamp_target=(2.0, 1.0)),
        GeneratorConfig(ranges={**DEFAULT_RANGES, "AGE": FeatureRange("uniform", 5.0, 1.0)}),
        GeneratorConfig(coefficients=(1.0, 2.0)),
    ]
    for cfg in bad:
        with pytest.raises(InvalidRange):
            generate(cfg)


def test_provenance_block():
    p = GeneratorConfig().provenance()
    assert p["seed"] == 42 and p["n"] == 612
    assert p["coefficients"]["SEGMENTSL"] == 11.5807336
    assert p["algorithm_id"] == RandomSource.algorithm_id
    assert set(p["ranges"]) == set(FEATURE_ORDER)


# -- pathologies -----------------------------------------------------------


def test_zero_spec_is_identity():
    t = generate(GeneratorConfig(n=40, seed=7))
    out = inject_pathologies(t, PathologySpec(), RandomSource(1))
    for c in t.names:
        assert out.column(c).tolist() == t.column(c).tolist()
    assert out.provenance.tags == {}


def test_outliers_recovered_by_iqr():
    t = generate(GeneratorConfig(n=612, seed=8))
    out = inject_pathologies(t, PathologySpec(outlier_count=5, outlier_scale=50), RandomSource(2))
    tagged = [rid for rid, tags in out.provenance.tags.items() if "outlier:LENGTH" in tags]
    assert len(tagged) == 5
    flags = flag_outliers_iqr(out, ["LENGTH"])
    assert sum(flags[rid] for rid in tagged) >= 4
    np.testing.assert_allclose(out.numeric("LENGTH")[tagged], 50 * t.numeric("LENGTH")[tagged])


def test_missing_fraction_binomial_band():
    t = generate(GeneratorConfig(n=100, seed=9))
    out = inject_pathologies(t, PathologySpec(missing_fraction=0.1), RandomSource(3))
    blanks = sum(int(out.missing_mask(c).sum()) for c in out.names)
    lo, hi = stats.binom.interval(0.99, 700, 0.1)
    assert lo <= blanks <= hi
    cleaned = clean(out, CleaningConfig(iqr=False, mahalanobis=False))
    assert all(not cleaned.missing_mask(c).any() for c in cleaned.names)
    assert cleaned.reconciles()


def test_pathology_validation():
    t = generate(GeneratorConfig(n=5, seed=1))
    with pytest.raises(InvalidRange):
        inject_pathologies(t, PathologySpec(missing_fraction=1.0), RandomSource(1))
    with pytest.raises(InvalidRange):
        inject_pathologies(t, PathologySpec(outlier_count=6), RandomSource(1))
