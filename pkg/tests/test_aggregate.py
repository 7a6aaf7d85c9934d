import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from stratheda.aggregate import aggregate, n_strata, normalize_labels, pool
from stratheda.errors import DimensionError


def test_normalize_first_occurrence():
    assert normalize_labels([3, 2, 4, 3, 2, 1, 1, 4]).tolist() == [1, 2, 3, 1, 2, 4, 4, 3]
    assert n_strata(normalize_labels([3, 2, 4, 3, 2, 1, 1, 4])) == 4
    assert normalize_labels([1, 1, 1]).tolist() == [1, 1, 1]


def test_normalize_drops_gaps():
    assert normalize_labels([7, 7, 2, 9]).tolist() == [1, 1, 2, 3]


@given(st.lists(st.integers(1, 12), min_size=1, max_size=30))
def test_normalize_idempotent(raw):
    once = normalize_labels(raw)
    assert normalize_labels(once).tolist() == once.tolist()
    assert set(once.tolist()) == set(range(1, once.max() + 1))
    # same partition
    raw = np.array(raw)
    for i in range(len(raw)):
        for j in range(len(raw)):
            assert (raw[i] == raw[j]) == (once[i] == once[j])


def test_identity_aggregation(iris):
    stats = aggregate(iris, np.arange(1, 9))
    np.testing.assert_array_equal(stats.counts, iris.counts)
    np.testing.assert_allclose(stats.means, iris.means, rtol=1e-12)
    np.testing.assert_allclose(stats.stddevs, iris.stddevs, rtol=1e-7, atol=1e-7)


def test_iris_merge_a_and_d(iris):
    labels = [1, 2, 3, 1, 4, 5, 6, 7]
    stats = aggregate(iris, labels)
    # by hand from the fixture rows a=(40,1.46,0.17) and d=(10,1.48,0.17)
    m = (40 * 1.46 + 10 * 1.48) / 50
    s = np.sqrt((40 * (0.17**2 + 1.46**2) + 10 * (0.17**2 + 1.48**2)) / 50 - m**2)
    assert stats.counts[0] == 50
    assert stats.means[0, 0] == pytest.approx(1.464, abs=1e-12)
    assert stats.stddevs[0, 0] == pytest.approx(s, rel=1e-9)
    assert stats.stddevs[0, 0] == pytest.approx(0.170, abs=0.01)


def test_length_mismatch(iris):
    with pytest.raises(DimensionError):
        aggregate(iris, [1, 2, 3])


def test_constant_members_have_zero_variance():
    stats = pool([3, 4], [[2.0], [2.0]], [[0.0], [0.0]], [1, 1])
    assert stats.stddevs[0, 0] == 0.0
    assert stats.means[0, 0] == 2.0


instance_and_labels = st.integers(0, 2**32 - 1).flatmap(
    lambda seed: st.tuples(st.just(seed), st.integers(2, 12))
)


@settings(max_examples=100, deadline=None)
@given(instance_and_labels, st.data())
def test_mass_conservation(args, data):
    seed, L = args
    inst = random_instance(np.random.default_rng(seed), L)
    labels = data.draw(st.lists(st.integers(1, L), min_size=L, max_size=L))
    stats = aggregate(inst, labels)
    assert stats.counts.sum() == pytest.approx(inst.counts.sum(), rel=1e-12)
    np.testing.assert_allclose(stats.counts @ stats.means, inst.totals, rtol=1e-9)
    assert np.all(stats.stddevs >= 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 12))
def test_pooling_associative(seed, L):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, L)
    labels = normalize_labels(rng.integers(1, 4, size=L))
    H = labels.max()
    if H < 2:
        return
    # pool A and B first, then merge the result with the rest in one stratum
    two_step = normalize_labels(np.where(labels <= 2, 1, labels))
    first = aggregate(inst, two_step)
    merged_later = pool(first.counts, first.means, first.stddevs, np.ones(first.H, dtype=int))
    direct = aggregate(inst, np.ones(L, dtype=int))
    np.testing.assert_allclose(merged_later.counts, direct.counts, rtol=1e-12)
    np.testing.assert_allclose(merged_later.means, direct.means, rtol=1e-9)
    np.testing.assert_allclose(merged_later.stddevs, direct.stddevs, rtol=1e-9, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 10))
def test_singleton_group_is_identity(seed, L):
    inst = random_instance(np.random.default_rng(seed), L)
    labels = np.r_[np.arange(1, L), L - 1]  # last two merged, rest singletons
    stats = aggregate(inst, labels)
    np.testing.assert_allclose(stats.means[: L - 2], inst.means[: L - 2], rtol=1e-12)
    np.testing.assert_allclose(stats.stddevs[: L - 2], inst.stddevs[: L - 2], rtol=1e-7, atol=1e-9)
