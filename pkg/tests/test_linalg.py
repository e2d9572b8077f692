import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tlreg.errors import CovarianceNotSPDError, ShapeError, SymmetryError
from tlreg.linalg import (Rng, as_generator, cholesky_factor, expected_gram_pinv,
                          expected_projected_quadratic, expected_projection, pseudoinverse,
                          pseudoinverse_apply, sample_gaussian_matrix, solve_spd,
                          sym_eigendecomposition)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_rng_streams_are_addressable():
    a = Rng(7).derive(16, 0, 3).generator().standard_normal(5)
    b = Rng(7).derive(16, 0, 3).generator().standard_normal(5)
    c = Rng(7).derive(16, 0, 4).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_rng_rejects_out_of_range_seed():
    with pytest.raises(ValueError):
        Rng(-1)
    with pytest.raises(ValueError):
        Rng(2 ** 64)


def test_as_generator_accepts_three_forms():
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    np.testing.assert_array_equal(as_generator(3).random(3), Rng(3).generator().random(3))
    with pytest.raises(TypeError):
        as_generator("seed")


def test_identity_covariance_draws_standard_normals():
    X = sample_gaussian_matrix(4, 3, None, Rng(1))
    np.testing.assert_array_equal(X, Rng(1).generator().standard_normal((4, 3)))


def test_row_covariance_is_respected():
    S = np.array([[2.0, 0.6], [0.6, 1.0]])
    X = sample_gaussian_matrix(40000, 2, S, Rng(2))
    np.testing.assert_allclose(X.T @ X / X.shape[0], S, atol=0.05)


def test_non_spd_covariance_raises():
    with pytest.raises(CovarianceNotSPDError):
        cholesky_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ShapeError):
        sample_gaussian_matrix(3, 2, np.eye(3), 0)


def test_pseudoinverse_examples():
    np.testing.assert_allclose(pseudoinverse_apply(np.array([[1.0, 0.0]]), np.array([2.0])), [2.0, 0.0])
    np.testing.assert_array_equal(pseudoinverse_apply(np.zeros((3, 2)), np.ones(3)), np.zeros(2))
    with pytest.raises(ShapeError):
        pseudoinverse_apply(np.eye(2), np.ones(3))
    # a reciprocal that would overflow is dropped rather than returned as inf
    np.testing.assert_array_equal(pseudoinverse(np.array([[2.2e-313]])), [[0.0]])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_moore_penrose_conditions(A):
    P = pseudoinverse(A)
    # the identities only hold to about eps * cond on the retained singular values
    sv = np.linalg.svd(A, compute_uv=False)
    kept = sv[sv > 1e-12 * max(A.shape) * sv[0]] if sv[0] > 0 else sv[:1]
    cond = kept[0] / kept[-1] if kept[-1] > 0 else 1.0
    scale = max(1.0, np.abs(A).max()) ** 2 * max(1.0, 1e-6 * cond)
    np.testing.assert_allclose(A @ P @ A, A, atol=1e-8 * scale)
    np.testing.assert_allclose((A @ P).T, A @ P, atol=1e-8 * scale)
    np.testing.assert_allclose((P @ A).T, P @ A, atol=1e-8 * scale)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_pseudoinverse_apply_matches_numpy(rows, cols, seed):
    gen = np.random.default_rng(seed)
    A, b = gen.standard_normal((rows, cols)), gen.standard_normal(rows)
    np.testing.assert_allclose(pseudoinverse_apply(A, b), np.linalg.pinv(A) @ b, atol=1e-9)


def test_eigendecomposition_descending_and_flags():
    S = np.diag([1.0, -2.0, 3.0])
    dec = sym_eigendecomposition(S)
    np.testing.assert_array_equal(dec.values, [3.0, 1.0, -2.0])
    assert dec.has_negative
    assert not sym_eigendecomposition(np.eye(2)).has_negative
    with pytest.raises(SymmetryError):
        sym_eigendecomposition(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_solve_spd_with_jitter_fallback():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    np.testing.assert_allclose(A @ solve_spd(A, np.array([1.0, 2.0])), [1.0, 2.0])
    singular = np.ones((2, 2))
    x = solve_spd(singular, np.array([1.0, 1.0]))
    assert np.all(np.isfinite(x))
    with pytest.raises(np.linalg.LinAlgError):
        solve_spd(singular, np.ones(2), jitter=False)


def test_source_moment_scalars():
    assert expected_projection(5, 10) == 1.0
    assert expected_projection(20, 10) == 0.5
    assert expected_gram_pinv(8, 12) == pytest.approx(1 / 3)
    assert expected_gram_pinv(24, 16) == pytest.approx((16 / 24) / 7)
    assert expected_gram_pinv(12, 12) == np.inf


def test_projected_quadratic_trace_and_identity():
    A = np.random.default_rng(0).standard_normal((9, 9))
    A = A @ A.T
    M = expected_projected_quadratic(A, 4)
    assert np.trace(M) == pytest.approx(4 / 9 * np.trace(A))
    np.testing.assert_allclose(expected_projected_quadratic(np.eye(9), 4), 4 / 9 * np.eye(9))
    np.testing.assert_array_equal(expected_projected_quadratic(A, 12), A)


def test_projected_quadratic_matches_monte_carlo_on_basis_vector():
    d, nt, draws = 10, 4, 20000
    gen = np.random.default_rng(3)
    vals = np.empty(draws)
    for i in range(draws):
        Q, _ = np.linalg.qr(gen.standard_normal((d, nt)))
        vals[i] = (Q[0] @ Q[0]) ** 2
    target = expected_projected_quadratic(np.diag(np.eye(d)[0]), nt)[0, 0]
    assert abs(vals.mean() - target) < 3 * vals.std() / np.sqrt(draws)
