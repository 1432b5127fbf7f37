"""
Tests per i kernel numerici
"""
import numpy as np
import pytest
import scipy.sparse as sp

from middleware.errors import NonFiniteError, ShapeMismatchError
from services.graph_core import SparseMatrix
from services.tensor_ops import elementwise, matmul, sigmoid, softmax, spmm


def test_spmm_identity():
    dense = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(spmm(SparseMatrix.identity(3), dense), dense)


def test_spmm_averaging_filter():
    averaging = SparseMatrix.from_dense(np.full((2, 2), 0.5))
    assert spmm(averaging, np.array([[1.0], [3.0]])).tolist() == [[2.0], [2.0]]


def test_spmm_matches_dense_oracle():
    rng = np.random.default_rng(0)
    for n in (10, 57, 100):
        sparse = sp.random(n, n, density=0.1, random_state=n, format="csr")
        dense = rng.standard_normal((n, 4))
        expected = sparse.toarray() @ dense
        assert np.allclose(spmm(SparseMatrix.from_scipy(sparse), dense), expected, rtol=0, atol=1e-12)


def test_spmm_dimension_mismatch():
    with pytest.raises(ShapeMismatchError):
        spmm(SparseMatrix.identity(3), np.ones((2, 2)))


def test_matmul_against_naive_loop():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    naive = np.array([[sum(a[i, k] * b[k, j] for k in range(4)) for j in range(2)] for i in range(3)])
    assert np.allclose(matmul(a, b), naive, atol=1e-12)
    assert matmul(np.array([[2.0]]), np.array([[3.0]])).tolist() == [[6.0]]


def test_matmul_mismatch():
    with pytest.raises(ShapeMismatchError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_overflow_is_reported():
    with pytest.raises(NonFiniteError) as info:
        matmul(np.array([[1e200]]), np.array([[1e200]]))
    assert info.value.primitive == "matmul"


def test_elementwise_kinds():
    assert elementwise("relu", np.array([[-1.0, 2.0]])).tolist() == [[0.0, 2.0]]
    assert elementwise("sigmoid", np.array([[0.0]])).tolist() == [[0.5]]
    assert elementwise("tanh", np.array([[0.0]])).tolist() == [[0.0]]


def test_sigmoid_clamped_strictly_inside_unit_interval():
    values = sigmoid(np.array([-1e6, -40.0, 40.0, 1e6]))
    assert np.all(values > 0) and np.all(values < 1)
    assert values[0] == values[1] and values[2] == values[3]


def test_softmax_closed_forms():
    assert np.allclose(softmax([7.0, 7.0, 7.0]), 1 / 3, atol=1e-12)
    assert np.allclose(softmax([np.log(2.0), 0.0]), [2 / 3, 1 / 3], atol=1e-12)
    large = softmax([1000.0, 0.0])
    assert np.isfinite(large).all() and large[0] == pytest.approx(1.0)


def test_softmax_shift_invariance():
    v = np.random.default_rng(2).standard_normal(5)
    assert np.allclose(softmax(v), softmax(v + 123.4), atol=1e-12)
    assert softmax(v).sum() == pytest.approx(1.0, abs=1e-12)
