import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvsrn.stats import RunningStats


def test_two_pushes():
    s = RunningStats(1).push(1.0, [0.0]).push(3.0, [0.0])
    assert s.mean_V == 2.0
    assert s.var_V == 2.0
    np.testing.assert_array_equal(s.cov_Z, [[0.0]])


def test_single_push_has_no_covariance():
    s = RunningStats(2).push(1.0, [1.0, 2.0])
    with pytest.raises(ValueError):
        s.covariance()


def test_dimension_checked():
    with pytest.raises(ValueError):
        RunningStats(2).push(1.0, [1.0])
    with pytest.raises(ValueError):
        RunningStats(1).merge(RunningStats(2))


def _data(seed, n, d):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, d)) * rng.uniform(0.1, 100, size=d) + rng.normal(0, 1e3, size=d)
    V = Z @ rng.normal(size=d) + rng.normal(size=n) + 50.0
    return V, Z


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 200), st.integers(0, 5))
def test_online_matches_two_pass(seed, n, d):
    V, Z = _data(seed, n, d)
    ref = np.cov(np.column_stack([Z, V]), rowvar=False, ddof=1).reshape(d + 1, d + 1)
    s = RunningStats(d)
    for v, z in zip(V, Z):
        s.push(v, z)
    b = RunningStats(d).push_batch(V, Z)
    scale = np.sqrt(np.outer(np.diag(ref), np.diag(ref)))
    assert np.all(np.abs(s.covariance() - ref) <= 1e-9 * scale + 1e-300)
    assert np.all(np.abs(b.covariance() - ref) <= 1e-9 * scale + 1e-300)
    assert s.mean_V == pytest.approx(V.mean(), rel=1e-12, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.lists(st.integers(1, 60), min_size=2, max_size=6))
def test_merge_of_partitions(seed, sizes):
    d = 3
    V, Z = _data(seed, sum(sizes), d)
    whole = RunningStats(d).push_batch(V, Z)
    parts, start = [], 0
    for k in sizes:
        parts.append(RunningStats(d).push_batch(V[start:start + k], Z[start:start + k]))
        start += k
    left = parts[0].copy()
    for p in parts[1:]:
        left.merge(p)
    right = parts[-1].copy()
    for p in reversed(parts[:-1]):
        right.merge(p)
    cov = whole.covariance()
    scale = np.sqrt(np.outer(np.diag(cov), np.diag(cov)))
    for merged in (left, right):
        assert merged.n == whole.n
        assert np.all(np.abs(merged.covariance() - cov) <= 1e-9 * scale)


def test_subset_and_correlation():
    V, Z = _data(1, 500, 3)
    s = RunningStats(3).push_batch(V, Z)
    sub = s.subset([2, 0])
    np.testing.assert_allclose(sub.covariance(), s.covariance()[np.ix_([2, 0, 3], [2, 0, 3])])
    corr = s.correlation()
    np.testing.assert_allclose(np.diag(corr), 1.0)
    np.testing.assert_allclose(corr, np.corrcoef(np.column_stack([Z, V]), rowvar=False), atol=1e-12)


def test_constant_column_has_zero_correlation():
    s = RunningStats(2).push_batch([1.0, 2.0, 4.0], [[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])
    corr = s.correlation()
    assert corr[0].tolist() == [0.0, 0.0, 0.0]
    assert corr[1, 2] > 0.9
