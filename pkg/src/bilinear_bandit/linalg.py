"""Small dense linear-algebra kernels used throughout the package.

Matrices here are at most a few dozen rows, so everything is backed by
LAPACK through numpy/scipy rather than hand-rolled decompositions.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidDimensionError, InvalidInputError, SingularMatrixError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class SvdFactors:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self):
        return (self.U * self.S) @ self.V.T


def as_finite_matrix(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise InvalidInputError(f"{name} must be a nonempty 2-d array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def thin_svd(M):
    """Thin SVD ``M = U diag(S) V^T`` with ``S`` non-increasing."""
    M = as_finite_matrix(M)
    U, S, Vt = np.linalg.svd(M, full_matrices=False)
    return SvdFactors(U, S, Vt.T)


def numerical_rank(S):
    S = np.asarray(S)
    if S.size == 0 or S[0] == 0.0:
        return 0
    return int(np.count_nonzero(S > RANK_TOL * S[0]))


def min_nonzero_singular(M):
    """Smallest singular value above ``1e-10 * sigma_max``; 0 for the zero matrix."""
    S = np.linalg.svd(as_finite_matrix(M), compute_uv=False)
    k = numerical_rank(S)
    return float(S[k - 1]) if k else 0.0


def complement_basis(U, tol=1e-8):
    """Orthonormal basis of the orthogonal complement of ``span(U)``.

    ``U`` must have orthonormal columns. The result ``W`` is ``d x (d - r)``
    with ``W^T W = I`` and ``W^T U = 0``.
    """
    U = as_finite_matrix(U, "U")
    d, r = U.shape
    if r >= d:
        raise InvalidDimensionError(f"complement needs r < d, got r={r}, d={d}")
    if np.linalg.norm(U.T @ U - np.eye(r)) > tol:
        raise InvalidInputError("U does not have orthonormal columns")
    # Householder QR of U gives a full orthogonal Q whose first r columns span U.
    Q, _ = np.linalg.qr(U, mode="complete")
    W = Q[:, r:]
    # one re-orthogonalisation pass against U tightens W^T U to machine precision
    W = W - U @ (U.T @ W)
    W, _ = np.linalg.qr(W)
    return W


def solve_spd(V, b):
    V = as_finite_matrix(V, "V")
    b = np.asarray(b, dtype=float)
    if V.shape[0] != V.shape[1] or V.shape[0] != b.shape[0]:
        raise InvalidDimensionError(f"shape mismatch {V.shape} vs {b.shape}")
    if np.max(np.abs(V - V.T)) > 1e-10 * max(1.0, np.max(np.abs(V))):
        raise InvalidInputError("V is not symmetric")
    try:
        factor = scipy.linalg.cho_factor(V, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("matrix is not positive definite") from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def logdet_spd(V):
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("matrix is not positive definite") from exc
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def random_orthonormal(n, k, rng):
    """``n x k`` matrix with orthonormal columns, Haar distributed."""
    Q, R = np.linalg.qr(rng.standard_normal((n, k)))
    return Q * np.sign(np.diag(R))


def projector(U):
    return U @ U.T
