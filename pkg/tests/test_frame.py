import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA
from stratheda.aggregate import aggregate
from stratheda.errors import ColumnError, EmptyInputError, ModeError, ParseError, ValidationError
from stratheda.frame import (
    Frame,
    build_atomic_strata,
    build_continuous_strata,
    kmeans_bin,
    load_basic_strata,
    load_constraints,
    load_frame,
    write_constraints,
    write_instance,
)


@pytest.fixture(scope="module")
def iris_frame():
    return load_frame(DATA / "iris.csv", ["PetalLength", "PetalWidth"], ["SepalLength", "Species"])


def test_load_iris(iris_frame):
    assert iris_frame.n_records == 150
    assert iris_frame.target_names == ["PetalLength", "PetalWidth"]
    assert len(iris_frame.targets) == 2
    assert iris_frame.targets["PetalLength"][0] == pytest.approx(1.4)


def test_load_without_aux_is_continuous_only(iris_frame):
    frame = load_frame(DATA / "iris.csv", ["PetalLength"])
    assert frame.aux == {}
    with pytest.raises(ModeError):
        build_atomic_strata(frame)
    assert build_continuous_strata(frame).L == 150


def test_missing_column(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("HINCP,BLD\n1,2\n")
    with pytest.raises(ColumnError, match="VALP"):
        load_frame(p, ["VALP"], ["BLD"])


def test_non_numeric_target_reports_row(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("y,x\n1,a\n2,b\nthree,c\n")
    with pytest.raises(ParseError) as exc:
        load_frame(p, ["y"], ["x"])
    assert exc.value.row == 3


def test_missing_value_rejected(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("y,x\n1,a\n,b\n")
    with pytest.raises(ParseError):
        load_frame(p, ["y"], ["x"])


def test_empty_file(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("")
    with pytest.raises(EmptyInputError):
        load_frame(p, ["y"])


def test_tab_delimited(tmp_path):
    p = tmp_path / "f.tsv"
    p.write_text("y\tx\n1\ta\n2\tb\n")
    frame = load_frame(p, ["y"], ["x"])
    assert frame.targets["y"].tolist() == [1.0, 2.0]


def brute_force_two_means(x):
    """Best split of sorted 1-D data into two contiguous groups."""
    xs = np.sort(x)
    best = None
    for cut in range(1, xs.size):
        lo, hi = xs[:cut], xs[cut:]
        sse = ((lo - lo.mean()) ** 2).sum() + ((hi - hi.mean()) ** 2).sum()
        if best is None or sse < best[0]:
            best = (sse, xs[cut - 1])
    return best[1]


def test_kmeans_two_clusters_matches_brute_force():
    x = np.array([1.0, 2.0, 10.0, 11.0])
    threshold = brute_force_two_means(x)
    expected = np.where(x <= threshold, 1, 2)
    assert kmeans_bin(x, 2, seed=7).tolist() == expected.tolist() == [1, 1, 2, 2]


def test_kmeans_single_cluster():
    assert kmeans_bin(np.full(5, 3.3), 1).tolist() == [1] * 5


def test_kmeans_infeasible_k():
    with pytest.raises(ValueError, match="infeasible"):
        kmeans_bin([1.0, 1.0, 2.0], 3)


def test_kmeans_iris_monotone_and_deterministic(iris_frame):
    x = iris_frame.aux["SepalLength"].astype(float)
    a = kmeans_bin(x, 3, seed=1234)
    b = kmeans_bin(x, 3, seed=1234)
    assert a.tolist() == b.tolist()
    assert sorted(set(a.tolist())) == [1, 2, 3]
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(a[order]) >= 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=40), st.integers(1, 3), st.integers(0, 99))
def test_kmeans_label_monotone(values, k, seed):
    x = np.array(values)
    if np.unique(x).size < k:
        return
    labels = kmeans_bin(x, k, seed)
    order = np.argsort(x, kind="stable")
    assert np.all(np.diff(labels[order]) >= 0)
    assert labels.tolist() == kmeans_bin(x, k, seed).tolist()


def test_atomic_iris(iris_frame):
    frame = iris_frame.bin("SepalLength", 3, seed=1234)
    inst = build_atomic_strata(frame)
    assert inst.L == 8
    assert inst.counts.sum() == 150
    # species totals are 50/50/50; binning may move cells but not species totals
    species = [i.split("|")[1] for i in inst.ids]
    for name in ("setosa", "versicolor", "virginica"):
        assert sum(n for n, s in zip(inst.counts, species) if s == name) == 50
    frame_totals = [frame.targets[n].sum() for n in frame.target_names]
    np.testing.assert_allclose(inst.totals, frame_totals, rtol=1e-12)


def test_atomic_cells_match_brute_force(iris_frame):
    frame = iris_frame.bin("SepalLength", 3, seed=1)
    inst = build_atomic_strata(frame)
    keys = ["|".join(k) for k in zip(frame.aux["SepalLength"], frame.aux["Species"])]
    y = frame.target_matrix()
    for l, cell in enumerate(inst.ids):
        rows = y[[k == cell for k in keys]]
        assert inst.counts[l] == len(rows)
        np.testing.assert_allclose(inst.means[l], rows.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(inst.stddevs[l] ** 2, rows.var(axis=0), rtol=1e-9, atol=1e-14)


def test_atomic_single_cell_fails_invariant():
    frame = Frame({"y": np.array([1.0, 2.0, 3.0])}, {"x": np.array(["a", "a", "a"])})
    with pytest.raises(ValidationError, match="L=1"):
        build_atomic_strata(frame)


def test_atomic_singletons():
    frame = Frame({"y": np.array([1.0, 5.0])}, {"x": np.array(["a", "b"])})
    inst = build_atomic_strata(frame)
    assert inst.counts.tolist() == [1, 1]
    assert inst.stddevs.tolist() == [[0.0], [0.0]]


def test_continuous_strata():
    rng = np.random.default_rng(3)
    y = rng.normal(10, 2, size=(10, 2))
    frame = Frame({"a": y[:, 0], "b": y[:, 1]})
    inst = build_continuous_strata(frame)
    assert inst.L == 10
    assert np.all(inst.counts == 1) and np.all(inst.stddevs == 0)
    np.testing.assert_allclose(inst.totals, y.sum(axis=0))
    pooled = aggregate(inst, np.ones(10, dtype=int))
    np.testing.assert_allclose(pooled.means[0], y.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(pooled.stddevs[0], y.std(axis=0, ddof=0), rtol=1e-9)


def test_table1_fixture(iris):
    assert iris.L == 8
    expected_t1 = 40 * 1.46 + 5 * 3.40 + 1 * 4.50 + 10 * 1.48 + 31 * 4.23 + 12 * 5.07 + 14 * 4.64 + 37 * 5.74
    assert iris.totals[0] == pytest.approx(expected_t1, rel=1e-12)
    assert iris.constraints.names == ("PetalLength", "PetalWidth")
    assert iris.constraints.epsilons.tolist() == [0.05, 0.05]


def test_fixture_rejects_negative_sd(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,N,M1,S1\na,3,1.0,-0.1\nb,2,1.0,0.1\n")
    with pytest.raises(ValidationError, match="'a'"):
        load_basic_strata(p)


def test_fixture_rejects_bad_count(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,N,M1,S1\na,0,1.0,0.1\nb,2,1.0,0.1\n")
    with pytest.raises(ValidationError):
        load_basic_strata(p)


def test_fixture_rejects_ragged(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,N,M1,M2,S1\na,3,1.0,2.0,0.1\nb,2,1.0,2.0,0.1\n")
    with pytest.raises(ValidationError):
        load_basic_strata(p)


def test_fixture_round_trip(tmp_path, iris):
    write_instance(tmp_path / "s.csv", iris)
    write_constraints(tmp_path / "cv.csv", iris.constraints)
    back = load_basic_strata(tmp_path / "s.csv", tmp_path / "cv.csv")
    assert back.ids == iris.ids
    assert np.array_equal(back.counts, iris.counts)
    assert np.array_equal(back.means, iris.means)
    assert np.array_equal(back.stddevs, iris.stddevs)
    assert np.array_equal(back.constraints.epsilons, iris.constraints.epsilons)


def test_constraints_without_header(tmp_path):
    p = tmp_path / "cv.csv"
    p.write_text("VALP,0.05\nHINCP,0.1\n")
    c = load_constraints(p)
    assert c.names == ("VALP", "HINCP")
    assert c.epsilons.tolist() == [0.05, 0.1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 60), st.integers(1, 3))
def test_atomic_partitions_frame(seed, n, n_aux):
    rng = np.random.default_rng(seed)
    y = rng.uniform(1, 5, size=n)
    aux = {f"x{i}": rng.integers(0, 3, size=n).astype(str) for i in range(n_aux)}
    frame = Frame({"y": y}, aux)
    cells = set(itertools.product(*(aux[k].tolist() for k in aux)))
    observed = set(zip(*(aux[k].tolist() for k in aux)))
    if len(observed) < 2:
        return
    inst = build_atomic_strata(frame)
    assert inst.L == len(observed) <= len(cells)
    assert inst.counts.sum() == n
    assert inst.totals[0] == pytest.approx(y.sum(), rel=1e-12)
