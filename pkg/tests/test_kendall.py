import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdee.errors import DegenerateData, OutOfRange
from hdee.kendall import kendall_tables, kendall_tau, leave_one_out_theta, skeptic_transform


def tau_definition(X):
    n, d = X.shape
    tau = np.eye(d)
    for j, k in itertools.combinations(range(d), 2):
        s = 0.0
        for i, ii in itertools.permutations(range(n), 2):
            s += np.sign((X[i, j] - X[ii, j]) * (X[i, k] - X[ii, k]))
        tau[j, k] = tau[k, j] = s / (n * (n - 1))
    return tau


def theta_definition(X):
    n, d = X.shape
    tau = tau_definition(X)
    out = np.zeros((n, d, d))
    for i in range(n):
        for j in range(d):
            for k in range(d):
                acc = sum(np.sign((X[i, j] - X[ii, j]) * (X[i, k] - X[ii, k])) for ii in range(n) if ii != i)
                out[i, j, k] = np.pi * np.cos(np.pi / 2 * tau[j, k]) * (acc / (n - 1) - tau[j, k])
    return out


def test_small_example():
    X = np.array([[1, 1], [2, 3], [3, 2], [4, 4]], dtype=float)
    assert kendall_tau(X)[0, 1] == pytest.approx(2 / 3)


def test_perfect_concordance():
    x = np.arange(6.0)
    X = np.column_stack([x, 2 * x + 1, -x])
    tau = kendall_tau(X)
    assert tau[0, 1] == 1.0
    assert tau[0, 2] == -1.0
    np.testing.assert_allclose(skeptic_transform(tau)[0, 1], 1.0)


def test_matches_definition():
    rng = np.random.default_rng(0)
    for _ in range(10):
        X = rng.standard_normal((10, 4))
        np.testing.assert_array_equal(kendall_tau(X), tau_definition(X))


def test_ties_count_zero():
    X = np.array([[0.0, 1.0], [0.0, 2.0], [1.0, 3.0]])
    np.testing.assert_array_equal(kendall_tau(X), tau_definition(X))
    # the tied pair contributes 0, the other two pairs are concordant
    assert kendall_tau(X)[0, 1] == pytest.approx(2 / 3)


def test_theta_matches_definition():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((9, 3))
    np.testing.assert_allclose(leave_one_out_theta(X), theta_definition(X), atol=1e-13)


def test_rank_invariance():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((30, 5))
    np.testing.assert_array_equal(kendall_tau(X), kendall_tau(X**3))
    np.testing.assert_array_equal(leave_one_out_theta(X), leave_one_out_theta(np.exp(X)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 25), st.integers(1, 6))
def test_theta_properties(seed, n, d):
    X = np.random.default_rng(seed).standard_normal((n, d))
    t = kendall_tables(X)
    assert np.abs(t.theta_i.sum(axis=0)).max() <= 1e-12 * max(1, n)
    assert np.abs(t.theta_i).max() <= 2 * np.pi
    np.testing.assert_array_equal(t.tau, t.tau.T)
    assert np.all(np.abs(t.tau) <= 1)
    np.testing.assert_allclose(t.theta_i, t.theta_i.transpose(0, 2, 1))


def test_errors():
    with pytest.raises(DegenerateData):
        kendall_tau(np.zeros((1, 3)))
    with pytest.raises(OutOfRange):
        skeptic_transform(np.array([[1.0, 1.5], [1.5, 1.0]]))
