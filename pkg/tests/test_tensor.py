import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adindrnn.tensor import DimensionError, as_tensor, hadamard, matmul, mean_over_axis, softmax_rows

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_matmul_examples():
    b = np.array([[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), b), b)
    np.testing.assert_array_equal(matmul(np.array([[1, 2], [3, 4]]), np.array([[5], [6]])), [[17], [39]])
    np.testing.assert_array_equal(matmul(np.zeros((3, 2)), np.ones((2, 4))), np.zeros((3, 4)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
def test_matmul_matches_triple_loop(m, k, n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(m, k)), rng.normal(size=(k, n))
    np.testing.assert_allclose(matmul(a, b), triple_loop(a, b), rtol=1e-12, atol=1e-12)


def test_matmul_rejects_bad_shapes():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(DimensionError):
        matmul(np.ones(3), np.ones((3, 1)))


def test_hadamard_examples():
    x = np.array([[1.5, -2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(hadamard(x, np.ones_like(x)), x)
    np.testing.assert_array_equal(hadamard(x, np.zeros_like(x)), np.zeros_like(x))
    np.testing.assert_array_equal(hadamard(np.array([1, 2]), np.array([3, 4])), [3, 8])


def test_hadamard_vector_against_last_axis_only():
    x = np.ones((2, 3, 4))
    assert hadamard(x, np.arange(4.0)).shape == (2, 3, 4)
    with pytest.raises(DimensionError):
        hadamard(x, np.ones(3))
    with pytest.raises(DimensionError):
        hadamard(np.ones((2, 3)), np.ones((3, 2)))


def test_softmax_examples():
    np.testing.assert_allclose(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])
    np.testing.assert_allclose(softmax_rows(np.array([[0.0, math.log(3)]])), [[0.25, 0.75]], rtol=1e-15)
    out = softmax_rows(np.array([[1000.0, 1000.0]]))
    assert np.all(np.isfinite(out))
    np.testing.assert_array_equal(out, [[0.5, 0.5]])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_softmax_rows_are_distributions(a):
    p = softmax_rows(a)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(softmax_rows(a + 17.0), p, atol=1e-12)


def test_softmax_requires_rank_2():
    with pytest.raises(DimensionError):
        softmax_rows(np.ones(3))


def test_mean_over_axis_examples():
    np.testing.assert_array_equal(mean_over_axis(np.array([[1.0, 3.0], [5.0, 7.0]]), 0), [3.0, 5.0])
    np.testing.assert_array_equal(mean_over_axis(np.full((3, 4, 2), 2.5), 1), np.full((3, 2), 2.5))
    x = np.arange(6.0).reshape(2, 1, 3)
    np.testing.assert_array_equal(mean_over_axis(x, 1), x[:, 0, :])
    with pytest.raises(DimensionError):
        mean_over_axis(x, 3)


def test_as_tensor_rejects_empty_extent():
    assert as_tensor(2.0).shape == (1,)
    assert as_tensor([[1, 2]]).dtype == np.float64
    with pytest.raises(DimensionError):
        as_tensor(np.zeros((0, 3)))
