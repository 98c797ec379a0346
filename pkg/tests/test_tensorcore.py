import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zslfeedback.errors import ContractError, GradCheckError
from zslfeedback.tensorcore import (as_matrix, central_difference, cross_sq_dists,
                                    grad_check, matmul, pairwise_sq_dists)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def naive_sq_dists(x):
    n, d = x.shape
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(d):
                diff = x[i, k] - x[j, k]
                s += diff * diff
            out[i, j] = s
    return out


def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(a, np.eye(2)), a)
    assert np.array_equal(matmul([[1.0, 2.0]], [[3.0], [4.0]]), [[11.0]])
    assert np.array_equal(matmul(np.zeros((1, 0)), np.zeros((0, 1))), [[0.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ContractError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_as_matrix_rejects_vectors():
    with pytest.raises(ContractError):
        as_matrix(np.ones(3))


def test_matmul_associative(rng):
    for _ in range(20):
        a, b, c = (rng.normal(size=(10, 10)) for _ in range(3))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) <= 1e-9 * np.max(np.abs(left))


def test_pairwise_examples():
    assert np.array_equal(pairwise_sq_dists([[0.0, 0.0], [1.0, 0.0]]), [[0, 1], [1, 0]])
    assert np.array_equal(pairwise_sq_dists([[3.0, -2.0, 7.0]]), [[0.0]])
    assert pairwise_sq_dists([[0.0, 0.0], [3.0, 4.0]])[0, 1] == 25.0


@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 6)), elements=finite))
def test_pairwise_matches_naive_loop_exactly(x):
    d = pairwise_sq_dists(x)
    assert np.array_equal(d, naive_sq_dists(x))
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0) and np.all(d >= 0)


def test_pairwise_exact_at_n64(rng):
    x = rng.normal(size=(64, 8)) * 10
    assert np.array_equal(pairwise_sq_dists(x), naive_sq_dists(x))


@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 5)), elements=finite),
       arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 5)), elements=finite))
def test_cross_dists_nonnegative_and_close(a, b):
    if a.shape[1] != b.shape[1]:
        b = np.resize(b, (b.shape[0], a.shape[1]))
    d = cross_sq_dists(a, b)
    ref = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    assert np.all(d >= 0)
    scale = 1.0 + (a ** 2).sum(1)[:, None] + (b ** 2).sum(1)[None, :]
    assert np.all(np.abs(d - ref) <= 1e-12 * scale)


def test_grad_check_examples(rng):
    theta = rng.normal(size=7)
    assert grad_check(lambda t: float(t @ t), lambda t: 2 * t, theta) <= 1e-8
    assert grad_check(lambda t: 3.0, np.zeros(4), np.ones(4)) == 0.0
    assert grad_check(lambda t: t[0] * t[1], np.array([3.0, 2.0]), [2.0, 3.0]) <= 1e-8


def test_grad_check_detects_wrong_gradient():
    assert grad_check(lambda t: float(t @ t), lambda t: 3 * t, np.ones(3)) > 0.1


def test_non_finite_evaluation_reports_coordinate():
    def f(t):
        return np.inf if t[2] > 1.0 else float(t.sum())

    with pytest.raises(GradCheckError) as info:
        central_difference(f, np.ones(4))
    assert info.value.coordinate == 2


def test_central_difference_rejects_bad_eps():
    with pytest.raises(ContractError):
        central_difference(lambda t: 0.0, np.ones(2), eps=0.0)
