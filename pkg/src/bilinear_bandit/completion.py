"""Rank-r recovery of a matrix from averaged noisy entry observations.

Two solvers share one alternating least-squares core:

* ``burer-monteiro``: factor ``K ~ A B^T`` and alternate exact
  least-squares solves over the observed cells, starting from the top-r SVD
  of the zero-filled, rescaled average matrix.
* ``optspace-style``: same refinement, but the spectral start is computed
  after trimming over-represented rows and columns.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDimensionError, InvalidInputError, InvalidRankError
from .linalg import complement_basis, numerical_rank, thin_svd

log = logging.getLogger(__name__)

METHODS = ("burer-monteiro", "optspace-style")


class ObservationTable:
    """Running sums and counts of rewards per ``(i, j)`` cell."""

    def __init__(self, d1, d2):
        if d1 < 1 or d2 < 1:
            raise InvalidDimensionError(f"table dims must be positive, got {(d1, d2)}")
        self.d1, self.d2 = int(d1), int(d2)
        self.sum = np.zeros((d1, d2))
        self.count = np.zeros((d1, d2), dtype=np.int64)

    @property
    def n_samples(self):
        return int(self.count.sum())

    def record(self, i, j, y):
        if not (0 <= i < self.d1 and 0 <= j < self.d2):
            raise InvalidInputError(f"cell {(i, j)} outside a {self.d1}x{self.d2} table")
        self.sum[i, j] += y
        self.count[i, j] += 1
        return self

    def record_many(self, rows, cols, ys):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (
            rows.min() < 0 or rows.max() >= self.d1 or cols.min() < 0 or cols.max() >= self.d2
        ):
            raise InvalidInputError("cell index out of range")
        np.add.at(self.sum, (rows, cols), ys)
        np.add.at(self.count, (rows, cols), 1)
        return self

    def averaged(self):
        """Return ``(K_tilde, mask)``; unobserved cells are 0 and unmasked."""
        mask = self.count > 0
        K = np.zeros_like(self.sum)
        K[mask] = self.sum[mask] / self.count[mask]
        return K, mask


@dataclass
class CompletionOptions:
    max_iter: int = 200
    rel_tol: float = 1e-9
    grad_tol: float = 1e-6


@dataclass
class CompletionResult:
    K_hat: np.ndarray
    iterations: int
    converged: bool
    objective: float
    method: str = "burer-monteiro"
    grad_norm: float = 0.0
    objective_history: list = field(default_factory=list)
    # rows / cols without any observation; their factors are extrapolated as 0
    empty_rows: tuple = ()
    empty_cols: tuple = ()

    @property
    def degraded(self):
        return bool(self.empty_rows or self.empty_cols)


@dataclass(frozen=True)
class IncoherenceReport:
    mu0: float
    mu1: float
    kappa: float


def _masked_ls(M, K, F):
    """Row-wise least squares: for each row i, argmin_a sum_j M_ij (K_ij - a.F_j)^2.

    Rows whose normal matrix is rank-deficient get the minimum-norm solution,
    which is zero for rows without observations.
    """
    G = np.einsum("ij,jk,jl->ikl", M, F, F)
    rhs = (M * K) @ F
    return np.einsum("ikl,il->ik", np.linalg.pinv(G, hermitian=True), rhs)


def _objective(M, K, A, B):
    R = M * (A @ B.T - K)
    return float(np.sum(R * R))


def _gradient_norm(M, K, A, B):
    R = M * (A @ B.T - K)
    return float(np.sqrt(np.sum((R @ B) ** 2) + np.sum((R.T @ A) ** 2)))


def trim_mask(mask):
    """Drop rows/cols whose observed count exceeds twice the mean count.

    Cells exactly at the threshold are kept.
    """
    mask = np.asarray(mask, dtype=bool).copy()
    d1, d2 = mask.shape
    n_obs = mask.sum()
    row_counts = mask.sum(axis=1)
    col_counts = mask.sum(axis=0)
    mask[row_counts > 2.0 * n_obs / d1, :] = False
    mask[:, col_counts > 2.0 * n_obs / d2] = False
    return mask


def _spectral_init(K, mask, r):
    n_obs = int(mask.sum())
    d1, d2 = K.shape
    if n_obs == 0:
        return np.zeros((d1, r)), np.zeros((d2, r))
    scaled = np.where(mask, K, 0.0) * (d1 * d2 / n_obs)
    f = thin_svd(scaled)
    root = np.sqrt(f.S[:r])
    return f.U[:, :r] * root, f.V[:, :r] * root


def complete(K_tilde, mask, r, method="burer-monteiro", opts=None):
    K = np.asarray(K_tilde, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if K.ndim != 2 or K.shape != mask.shape:
        raise InvalidInputError(f"K_tilde {K.shape} and mask {mask.shape} must match")
    d1, d2 = K.shape
    if not 1 <= r <= min(d1, d2):
        raise InvalidRankError(f"rank {r} not in [1, {min(d1, d2)}]")
    if method not in METHODS:
        raise InvalidInputError(f"unknown completion method {method!r}")
    if not np.all(np.isfinite(K[mask])):
        raise InvalidInputError("non-finite observations")
    opts = opts or CompletionOptions()

    K = np.where(mask, K, 0.0)
    M = mask.astype(float)
    empty_rows = tuple(int(i) for i in np.flatnonzero(~mask.any(axis=1)))
    empty_cols = tuple(int(j) for j in np.flatnonzero(~mask.any(axis=0)))
    if empty_rows or empty_cols:
        log.info("completion: %d empty rows, %d empty cols", len(empty_rows), len(empty_cols))

    init_mask = trim_mask(mask) if method == "optspace-style" else mask
    A, B = _spectral_init(K, init_mask, r)

    obj = _objective(M, K, A, B)
    history = [obj]
    scale = max(float(np.sum(K * K)), np.finfo(float).tiny)
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        A = _masked_ls(M, K, B)
        B = _masked_ls(M.T, K.T, A)
        new = _objective(M, K, A, B)
        history.append(new)
        change = abs(obj - new) / max(obj, np.finfo(float).tiny)
        obj = new
        if change < opts.rel_tol or new <= 1e-24 * scale:
            converged = True
            break

    return CompletionResult(
        K_hat=A @ B.T,
        iterations=it,
        converged=converged,
        objective=obj,
        method=method,
        grad_norm=_gradient_norm(M, K, A, B),
        objective_history=history,
        empty_rows=empty_rows,
        empty_cols=empty_cols,
    )


def incoherence(K, r):
    """Incoherence constants (mu0, mu1) and condition number of a rank-r matrix."""
    K = np.asarray(K, dtype=float)
    d1, d2 = K.shape
    f = thin_svd(K)
    if numerical_rank(f.S) < r:
        raise InvalidRankError(f"matrix has rank {numerical_rank(f.S)} < {r}")
    U, S, V = f.U[:, :r], f.S[:r], f.V[:, :r]
    mu0 = max(
        d1 / r * float(np.max(np.sum(U**2, axis=1))),
        d2 / r * float(np.max(np.sum(V**2, axis=1))),
    )
    weighted = (U * (S / S[0])) @ V.T
    mu1 = np.sqrt(d1 * d2 / r) * float(np.max(np.abs(weighted)))
    return IncoherenceReport(mu0=mu0, mu1=mu1, kappa=float(S[0] / S[-1]))


def sin_theta_product(U_hat_perp, U_star, V_hat_perp, V_star):
    """``||U_perp^T U*||_F * ||V_perp^T V*||_F``, the two-sided subspace error."""
    mats = [np.asarray(m, dtype=float) for m in (U_hat_perp, U_star, V_hat_perp, V_star)]
    Up, Us, Vp, Vs = mats
    if Up.ndim != 2 or Us.ndim != 2 or Up.shape[0] != Us.shape[0]:
        raise InvalidInputError(f"left bases incompatible: {Up.shape} vs {Us.shape}")
    if Vp.ndim != 2 or Vs.ndim != 2 or Vp.shape[0] != Vs.shape[0]:
        raise InvalidInputError(f"right bases incompatible: {Vp.shape} vs {Vs.shape}")
    return float(np.linalg.norm(Up.T @ Us) * np.linalg.norm(Vp.T @ Vs))


def subspace_bases(theta_hat, r):
    """Top-r singular subspaces of ``theta_hat`` and their complements."""
    f = thin_svd(theta_hat)
    U_hat, V_hat = f.U[:, :r], f.V[:, :r]
    d1, d2 = np.shape(theta_hat)
    U_perp = complement_basis(U_hat) if r < d1 else np.zeros((d1, 0))
    V_perp = complement_basis(V_hat) if r < d2 else np.zeros((d2, 0))
    return U_hat, U_perp, V_hat, V_perp


def factored_regression(X, Z, rows, cols, ys, r, opts=None):
    """Rank-r fit of ``theta = U V^T`` to bilinear measurements ``y ~ x_i^T theta z_j``.

    Observations are aggregated per pair and weighted by their counts, then
    ``U`` and ``V`` are updated by alternating (minimum-norm) weighted least
    squares. Used when observations are spread over an arbitrary arm set, so
    no square well-conditioned design is available to invert.
    """
    X, Z = np.asarray(X, dtype=float), np.asarray(Z, dtype=float)
    table = ObservationTable(X.shape[0], Z.shape[0]).record_many(rows, cols, ys)
    K, mask = table.averaged()
    ii, jj = np.nonzero(mask)
    if ii.size == 0:
        raise InvalidInputError("no observations")
    d1, d2 = X.shape[1], Z.shape[1]
    if not 1 <= r <= min(d1, d2):
        raise InvalidRankError(f"rank {r} not in [1, {min(d1, d2)}]")
    opts = opts or CompletionOptions()
    sw = np.sqrt(table.count[ii, jj].astype(float))
    y = K[ii, jj] * sw
    xs, zs = X[ii] * sw[:, None], Z[jj]

    moment = xs.T @ (y[:, None] * zs)
    f = thin_svd(moment if np.any(moment) else np.eye(d1, d2))
    root = np.sqrt(f.S[:r])
    U, V = f.U[:, :r] * root, f.V[:, :r] * root

    def loss(U, V):
        res = np.einsum("ni,ij,nj->n", xs, U @ V.T, zs) - y
        return float(res @ res)

    obj = loss(U, V)
    history = [obj]
    scale = max(float(y @ y), np.finfo(float).tiny)
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        F = (xs[:, :, None] * (zs @ V)[:, None, :]).reshape(len(y), -1)
        U = np.linalg.lstsq(F, y, rcond=None)[0].reshape(d1, r)
        G = (zs[:, :, None] * (xs @ U)[:, None, :]).reshape(len(y), -1)
        V = np.linalg.lstsq(G, y, rcond=None)[0].reshape(d2, r)
        new = loss(U, V)
        history.append(new)
        change = abs(obj - new) / max(obj, np.finfo(float).tiny)
        obj = new
        # an exact fit leaves only round-off, whose relative change is noise
        if change < opts.rel_tol or new <= 1e-24 * scale:
            converged = True
            break
    return U @ V.T, CompletionResult(
        K_hat=X @ U @ V.T @ Z.T,
        iterations=it,
        converged=converged,
        objective=obj,
        method="factored-regression",
        objective_history=history,
    )
