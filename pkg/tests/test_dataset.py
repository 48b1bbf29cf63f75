import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pipecond.dataset import (
    CATEGORICAL,
    NUMERIC,
    CleaningConfig,
    ColumnSchema,
    clean,
    drop_incomplete,
    flag_outliers_iqr,
    flag_outliers_mahalanobis,
    iqr_fences,
    k_fold_plan,
    load_table,
    mahalanobis_d2,
    table_from_columns,
    train_test_split,
    write_drop_log,
)
from pipecond.errors import (
    ColumnNotNumeric,
    DegenerateSplit,
    EmptyFile,
    InvalidK,
    MissingColumn,
    ParseError,
    SingularCovariance,
    TooFewRows,
)
from pipecond.numeric import chi2_quantile
from pipecond.synth import GeneratorConfig, generate

HEADER = "AGE,PIPEDIA,LENGTH,DEPTH,SEGMENTSL,SOILTYPE,PACPRATING\n"


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def single(name, values, kind=NUMERIC, required=True):
    return table_from_columns({name: values}, (ColumnSchema(name, kind, required),))


# -- loading ---------------------------------------------------------------


def test_header_only(tmp_path):
    t = load_table(write(tmp_path, HEADER))
    assert t.n_rows == 0
    assert t.names == ["AGE", "PIPEDIA", "LENGTH", "DEPTH", "SEGMENTSL", "SOILTYPE", "PACPRATING"]


def test_empty_file(tmp_path):
    with pytest.raises(EmptyFile):
        load_table(write(tmp_path, ""))


def test_missing_column(tmp_path):
    with pytest.raises(MissingColumn):
        load_table(write(tmp_path, "AGE,PIPEDIA\n1,2\n"))


def test_ragged_row_located(tmp_path):
    with pytest.raises(ParseError) as info:
        load_table(write(tmp_path, HEADER + "1,2,3,4,0.01,1,2\n1,2,3\n"))
    assert info.value.row == 3  # file line, header is line 1


def test_unparseable_cell_becomes_missing(tmp_path):
    t = load_table(write(tmp_path, HEADER + "abc,12,100,5,0.01,2,1.5\n40,12,100,5,1e-2,2,1.5\n"))
    assert t.n_rows == 2
    assert np.isnan(t.numeric("AGE")[0])
    assert t.numeric("SEGMENTSL")[1] == 0.01
    kept = drop_incomplete(t)
    assert kept.n_rows == 1
    assert kept.provenance.drops[0].reason == "missing:AGE"


def test_header_matching_and_tokens(tmp_path):
    text = (' age , PipeDia,LENGTH,DEPTH,SEGMENTSL,SoilType,PACPRATING\n'
            '10,8,50,3,0.001," Clay ",N/A\n'
            '11,8,50,3,0.001,2,na\n')
    t = load_table(write(tmp_path, text))
    assert t.column("SOILTYPE").tolist() == ["clay", "2"]
    assert np.isnan(t.numeric("PACPRATING")).all()


def test_round_trip(tmp_path):
    t = generate(GeneratorConfig(n=612, seed=7))
    p = tmp_path / "syn.csv"
    t.to_csv(p)
    back = load_table(p)
    assert back.n_rows == 612
    for name in t.names:
        if t.column_schema(name).kind == NUMERIC:
            assert np.array_equal(back.numeric(name), t.numeric(name))
        else:
            assert back.column(name).tolist() == t.column(name).tolist()


# -- drop_incomplete -------------------------------------------------------


def _ten_rows(depth):
    n = len(depth)
    return table_from_columns({
        "AGE": np.arange(n, dtype=float), "PIPEDIA": np.full(n, 8.0), "LENGTH": np.full(n, 100.0),
        "DEPTH": depth, "SEGMENTSL": np.full(n, 0.01), "SOILTYPE": ["1"] * n,
        "PACPRATING": np.linspace(1, 3, n)})


def test_drop_incomplete_counts():
    depth = np.arange(10, dtype=float)
    depth[[1, 4, 7]] = np.nan
    out = drop_incomplete(_ten_rows(depth))
    assert out.n_rows == 7
    assert [d.row_id for d in out.provenance.drops] == [1, 4, 7]
    assert {d.reason for d in out.provenance.drops} == {"missing:DEPTH"}
    assert out.reconciles()


def test_drop_incomplete_noop_and_idempotent():
    t = _ten_rows(np.arange(10, dtype=float))
    out = drop_incomplete(t)
    assert out.n_rows == 10 and out.provenance.drops == ()
    depth = np.arange(10, dtype=float)
    depth[3] = np.nan
    once = drop_incomplete(_ten_rows(depth))
    twice = drop_incomplete(once)
    assert twice.row_ids.tolist() == once.row_ids.tolist()
    assert twice.provenance.drops == once.provenance.drops


def test_optional_column_missing_is_kept():
    schema = (ColumnSchema("A", NUMERIC), ColumnSchema("NOTE", CATEGORICAL, required=False))
    t = table_from_columns({"A": [1.0, 2.0], "NOTE": ["x", None]}, schema)
    assert drop_incomplete(t).n_rows == 2


# -- IQR -------------------------------------------------------------------


def test_iqr_example():
    values = list(range(1, 11)) + [100]
    lo, hi = iqr_fences(np.array(values, dtype=float))
    assert (lo, hi) == (3.5 - 7.5, 16.0)
    flags = flag_outliers_iqr(single("X", values), ["X"])
    assert flags.tolist() == [False] * 10 + [True]


def test_iqr_constant_and_infinite_whisker():
    assert not flag_outliers_iqr(single("X", [4.0] * 9), ["X"]).any()
    assert not flag_outliers_iqr(single("X", [1, 2, 3, 1e9]), ["X"], whisker=np.inf).any()


def test_iqr_rejects_categorical():
    t = single("S", ["a", "b"], kind=CATEGORICAL)
    with pytest.raises(ColumnNotNumeric):
        flag_outliers_iqr(t, ["S"])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=40), st.randoms(use_true_random=False))
def test_iqr_permutation_equivariant(values, rnd):
    perm = list(range(len(values)))
    rnd.shuffle(perm)
    base = flag_outliers_iqr(single("X", values), ["X"])
    shuffled = flag_outliers_iqr(single("X", [values[i] for i in perm]), ["X"])
    assert shuffled.tolist() == base[perm].tolist()


# -- Mahalanobis -----------------------------------------------------------


def test_mahalanobis_center_row_is_zero():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 3))
    # appending the mean of the other rows leaves the overall mean unchanged
    X = np.vstack([X, X.mean(axis=0)])
    d2 = mahalanobis_d2(X)
    assert d2[-1] == pytest.approx(0.0, abs=1e-20)


def test_mahalanobis_identity_covariance_is_euclidean():
    # rows chosen so the sample covariance is exactly the identity
    s = np.sqrt(3.0 / 2.0)
    X = np.array([[s, 0], [-s, 0], [0, s], [0, -s]], dtype=float)
    np.testing.assert_allclose(np.cov(X, rowvar=False), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(mahalanobis_d2(X), np.sum(X**2, axis=1), rtol=1e-12)


def test_mahalanobis_quantile_one_flags_nothing():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(50, 2))
    t = table_from_columns({"A": data[:, 0], "B": data[:, 1]},
                           (ColumnSchema("A", NUMERIC), ColumnSchema("B", NUMERIC)))
    assert not flag_outliers_mahalanobis(t, ["A", "B"], quantile=1.0).any()


def test_mahalanobis_errors():
    with pytest.raises(TooFewRows):
        mahalanobis_d2(np.ones((2, 2)))
    X = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(SingularCovariance):
        mahalanobis_d2(X)


def test_mahalanobis_matches_zscore_oracle_for_independent_columns():
    # two exactly uncorrelated, unit-variance columns
    a = np.array([1, -1, 1, -1, 2, -2, 2, -2], dtype=float)
    b = np.array([1, 1, -1, -1, 2, 2, -2, -2], dtype=float)
    a, b = a / a.std(ddof=1), b / b.std(ddof=1)
    assert abs(np.cov(a, b)[0, 1]) < 1e-15
    t = table_from_columns({"A": a, "B": b}, (ColumnSchema("A", NUMERIC), ColumnSchema("B", NUMERIC)))
    for q in (0.5, 0.8, 0.9):
        expected = np.sqrt(a**2 + b**2) > np.sqrt(chi2_quantile(q, 2))
        assert flag_outliers_mahalanobis(t, ["A", "B"], q).tolist() == expected.tolist()


# -- clean -----------------------------------------------------------------


def test_clean_reconciles_and_logs(tmp_path):
    rng = np.random.default_rng(3)
    n = 60
    length = rng.uniform(50, 500, n)
    length[5] = 1e5
    depth = rng.uniform(3, 30, n)
    depth[9] = np.nan
    t = table_from_columns({
        "AGE": rng.uniform(1, 100, n), "PIPEDIA": rng.integers(8, 61, n).astype(float),
        "LENGTH": length, "DEPTH": depth, "SEGMENTSL": rng.uniform(0.001, 0.02, n),
        "SOILTYPE": [str(v) for v in rng.integers(1, 6, n)], "PACPRATING": rng.normal(2, 1, n)})
    out = clean(t)
    reasons = {d.row_id: d.reason for d in out.provenance.drops}
    assert reasons[9] == "missing:DEPTH"
    assert reasons[5] == "outlier:iqr"
    assert out.reconciles()
    only_missing = clean(t, CleaningConfig(iqr=False, mahalanobis=False))
    assert [d.row_id for d in only_missing.provenance.drops] == [9]
    write_drop_log(out, tmp_path / "drops.csv")
    lines = (tmp_path / "drops.csv").read_text().splitlines()
    assert lines[0] == "row_id,reason" and len(lines) == 1 + len(out.provenance.drops)


# -- partitions ------------------------------------------------------------


def test_split_counts_and_determinism():
    s = train_test_split(10, 0.8, 42)
    assert (len(s.train), len(s.test)) == (8, 2)
    again = train_test_split(10, 0.8, 42)
    assert s.train.tolist() == again.train.tolist() and s.test.tolist() == again.test.tolist()


def test_split_degenerate():
    with pytest.raises(DegenerateSplit):
        train_test_split(1, 0.5, 1)
    with pytest.raises(DegenerateSplit):
        train_test_split(3, 0.99, 1)
    with pytest.raises(DegenerateSplit):
        train_test_split(10, 1.0, 1)


@given(st.integers(2, 500), st.floats(0.05, 0.95), st.integers(0, 2**32))
def test_split_partition(n, f, seed):
    n_train = int(np.floor(f * n + 0.5))
    if n_train in (0, n):
        return
    s = train_test_split(n, f, seed)
    assert len(s.train) == n_train
    assert set(s.train.tolist()).isdisjoint(s.test.tolist())
    assert sorted(s.train.tolist() + s.test.tolist()) == list(range(n))


def test_fold_sizes():
    assert [len(f) for f in k_fold_plan(10, 5, 1).folds] == [2] * 5
    assert [len(f) for f in k_fold_plan(11, 5, 1).folds] == [3, 2, 2, 2, 2]
    with pytest.raises(InvalidK):
        k_fold_plan(5, 1, 1)
    with pytest.raises(InvalidK):
        k_fold_plan(5, 6, 1)


@given(st.integers(2, 300), st.integers(2, 12), st.integers(0, 2**32))
def test_folds_partition(n, k, seed):
    k = min(k, n)
    plan = k_fold_plan(n, k, seed)
    sizes = [len(f) for f in plan.folds]
    assert max(sizes) - min(sizes) <= 1
    assert sorted(np.concatenate(plan.folds).tolist()) == list(range(n))
    assert sorted(plan.train_indices(0).tolist() + plan.folds[0].tolist()) == list(range(n))
