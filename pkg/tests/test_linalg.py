import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from bilinear_bandit.errors import InvalidDimensionError, InvalidInputError, SingularMatrixError
from bilinear_bandit.linalg import (
    complement_basis,
    logdet_spd,
    min_nonzero_singular,
    projector,
    random_orthonormal,
    solve_spd,
    thin_svd,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
matrices = hnp.arrays(np.float64, st.tuples(st.integers(1, 7), st.integers(1, 7)), elements=finite)


def test_svd_identity():
    f = thin_svd(np.eye(3))
    assert np.allclose(f.S, 1.0)
    assert np.allclose(np.abs(f.U), np.eye(3))
    assert np.allclose(f.U @ f.V.T, np.eye(3))


def test_svd_diagonal_with_zero_row():
    f = thin_svd(np.array([[3.0, 0.0], [0.0, 2.0], [0.0, 0.0]]))
    assert np.allclose(f.S, [3.0, 2.0])


def test_svd_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        thin_svd(np.array([[1.0, np.nan]]))


@given(matrices)
def test_svd_factors_are_valid(M):
    f = thin_svd(M)
    scale = max(np.linalg.norm(M), 1.0)
    assert np.linalg.norm(f.reconstruct() - M) <= 1e-8 * scale
    k = f.S.size
    assert np.allclose(f.U.T @ f.U, np.eye(k), atol=1e-9)
    assert np.allclose(f.V.T @ f.V, np.eye(k), atol=1e-9)
    assert np.all(np.diff(f.S) <= 0) and np.all(f.S >= 0)


def test_complement_axis_case():
    W = complement_basis(np.array([[1.0], [0.0]]))
    assert np.allclose(np.abs(W), [[0.0], [1.0]])


def test_complement_diagonal_case():
    W = complement_basis(np.array([[1.0], [1.0]]) / np.sqrt(2))
    assert np.allclose(np.abs(W.ravel()), [1 / np.sqrt(2)] * 2)
    assert W[0, 0] * W[1, 0] < 0


@given(st.integers(2, 9), st.data())
def test_complement_completes_an_orthogonal_matrix(d, data):
    r = data.draw(st.integers(1, d - 1))
    seed = data.draw(st.integers(0, 2**32 - 1))
    U = random_orthonormal(d, r, np.random.default_rng(seed))
    W = complement_basis(U)
    Q = np.hstack([U, W])
    assert Q.shape == (d, d)
    assert np.allclose(Q.T @ Q, np.eye(d), atol=1e-8)
    # complementing twice returns the original column space
    assert np.allclose(projector(complement_basis(W)), projector(U), atol=1e-8)


def test_complement_errors():
    with pytest.raises(InvalidDimensionError):
        complement_basis(np.eye(3))
    with pytest.raises(InvalidInputError):
        complement_basis(np.array([[2.0], [0.0]]))


def test_min_nonzero_singular_cases():
    assert min_nonzero_singular(np.eye(3)) == pytest.approx(1.0)
    assert min_nonzero_singular(np.diag([5.0, 3.0, 0.0])) == pytest.approx(3.0)
    assert min_nonzero_singular(np.zeros((3, 2))) == 0.0
    u = np.array([2.0, 0.0, 0.0])
    v = np.array([0.0, 3.0 / np.sqrt(2), 3.0 / np.sqrt(2)])
    # rank one: the only singular value is |u| |v|
    assert min_nonzero_singular(np.outer(u, v)) == pytest.approx(6.0)


@given(st.integers(0, 2**32 - 1))
def test_min_nonzero_singular_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((5, 4))
    P, Q = random_orthonormal(5, 5, rng), random_orthonormal(4, 4, rng)
    assert abs(min_nonzero_singular(P @ M @ Q) - min_nonzero_singular(M)) <= 1e-8


def test_solve_spd_small_cases():
    assert np.allclose(solve_spd(np.eye(3), [1.0, -2.0, 3.0]), [1.0, -2.0, 3.0])
    assert np.allclose(solve_spd(np.diag([2.0, 4.0]), [2.0, 8.0]), [1.0, 2.0])


@given(st.integers(0, 2**32 - 1))
def test_solve_spd_residual(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((5, 5))
    V = A @ A.T + 0.1 * np.eye(5)
    b = rng.standard_normal(5)
    x = solve_spd(V, b)
    assert np.linalg.norm(V @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_solve_spd_rejects_indefinite():
    with pytest.raises(SingularMatrixError):
        solve_spd(np.diag([1.0, -1.0]), [1.0, 1.0])
    with pytest.raises(InvalidInputError):
        solve_spd(np.array([[1.0, 0.5], [0.0, 1.0]]), [1.0, 1.0])


def test_logdet_matches_slogdet(rng):
    A = rng.standard_normal((6, 6))
    V = A @ A.T + np.eye(6)
    assert logdet_spd(V) == pytest.approx(np.linalg.slogdet(V)[1], rel=1e-12)
