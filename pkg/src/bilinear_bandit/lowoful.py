"""Almost-low-dimensional OFUL.

A ridge-regression UCB learner whose diagonal penalty is ``lam`` on the first
``k`` coordinates and ``lam_perp`` on the rest. With ``k == p`` it is plain
OFUL.

The inverse Gram matrix is carried explicitly and kept current with
Sherman-Morrison updates; every ``REFRESH_EVERY`` updates it is rebuilt from
a Cholesky factorisation of ``V`` so drift stays bounded. When an arm matrix
is bound with :meth:`LowOFUL.bind_arms`, the squared widths
``||a||^2_{V^{-1}}`` of all arms are updated in O(n p) per round.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, SingularMatrixError

REFRESH_EVERY = 64
ARM_NORM_SLACK = 1e-9


@dataclass
class LowOfulConfig:
    p: int
    k: int
    lam: float = 1.0
    lam_perp: float = 1.0
    B: float = 1.0
    B_perp: float = 0.0
    sigma: float = 0.0
    delta: float = 0.05
    c: float = 1.0
    # optional third penalty level on coordinates k_core..k-1 (the mixed blocks)
    lam_cross: float | None = None
    k_core: int | None = None

    def __post_init__(self):
        if not 1 <= self.k <= self.p:
            raise InvalidInputError(f"need 1 <= k <= p, got k={self.k}, p={self.p}")
        if self.lam <= 0 or self.lam_perp <= 0:
            raise InvalidInputError("penalties must be positive")
        if self.B < 0 or self.B_perp < 0 or self.sigma < 0 or self.c < 0:
            raise InvalidInputError("B, B_perp, sigma and c must be nonnegative")
        if not 0 < self.delta < 1:
            raise InvalidInputError("delta must lie in (0, 1)")
        if self.lam_cross is not None:
            if self.lam_cross <= 0:
                raise InvalidInputError("lam_cross must be positive")
            if self.k_core is None or not 0 <= self.k_core <= self.k:
                raise InvalidInputError("lam_cross needs 0 <= k_core <= k")

    def penalty_diagonal(self):
        diag = np.full(self.p, float(self.lam_perp))
        diag[: self.k] = self.lam
        if self.lam_cross is not None:
            diag[self.k_core : self.k] = self.lam_cross
        return diag


@dataclass(frozen=True)
class ConfidenceEllipsoid:
    center: np.ndarray
    V: np.ndarray
    radius_sq: float


def lambda_perp_default(T, k, lam):
    """Penalty on the complementary coordinates that caps the log-det growth at 2k log(1 + T/lam)."""
    if T < 1:
        raise InvalidInputError("T must be >= 1")
    return T / (k * math.log1p(T / lam))


def contains(ellipsoid, theta, slack=1e-9):
    diff = np.asarray(theta, dtype=float) - ellipsoid.center
    if diff.shape != ellipsoid.center.shape:
        raise InvalidInputError("dimension mismatch")
    return float(diff @ ellipsoid.V @ diff) <= ellipsoid.radius_sq + slack


class LowOFUL:
    def __init__(self, config):
        self.config = config
        self.Lambda = config.penalty_diagonal()
        p = config.p
        self._V = np.diag(self.Lambda)
        self._pending = []  # arms pulled since V was last materialised
        self.V_inv = np.diag(1.0 / self.Lambda)
        self.b = np.zeros(p)
        self.theta_hat = np.zeros(p)
        self.t = 0
        self.logdet_Lambda = float(np.sum(np.log(self.Lambda)))
        self.logdet_V = self.logdet_Lambda
        self._since_refresh = 0
        self._arms = None
        self._widths_sq = None
        self._means = None

    @property
    def V(self):
        if self._pending:
            P = np.asarray(self._pending)
            self._V += P.T @ P
            self._pending.clear()
        return self._V

    # -- confidence width -------------------------------------------------

    def sqrt_beta(self):
        cfg = self.config
        ratio = max(self.logdet_V - self.logdet_Lambda, 0.0)
        noise = cfg.sigma * math.sqrt(ratio - 2.0 * math.log(cfg.delta))
        lam_B = max(cfg.lam, cfg.lam_cross or 0.0)
        bias = math.sqrt(lam_B) * cfg.B
        if cfg.k < cfg.p:
            bias += math.sqrt(cfg.lam_perp) * cfg.B_perp
        return cfg.c * (noise + bias)

    def beta(self):
        return self.sqrt_beta() ** 2

    def ellipsoid(self):
        return ConfidenceEllipsoid(self.theta_hat.copy(), self.V.copy(), self.beta())

    # -- arm selection ------------------------------------------------------

    def bind_arms(self, arms):
        """Attach a fixed arm matrix so widths are maintained incrementally."""
        arms = self._check_arms(arms)
        self._arms = arms
        self._sync_arms()
        return self

    def widths(self, arms):
        arms = np.atleast_2d(np.asarray(arms, dtype=float))
        W = scipy.linalg.cho_solve(self._cholesky(), arms.T, check_finite=False)
        return np.sqrt(np.maximum(np.einsum("ij,ji->i", arms, W), 0.0))

    def ucb(self, arms=None):
        if arms is None:
            if self._arms is None:
                raise InvalidInputError("no arms bound and none given")
            return self._means + self.sqrt_beta() * np.sqrt(np.maximum(self._widths_sq, 0.0))
        arms = self._check_arms(arms)
        return arms @ self.theta_hat + self.sqrt_beta() * self.widths(arms)

    def select(self, arms=None):
        """Index and value of the arm maximising the UCB; ties go to the lowest index."""
        values = self.ucb(arms)
        i = int(np.argmax(values))
        return i, float(values[i])

    # -- learning -------------------------------------------------------------

    def update(self, a, y):
        a = np.asarray(a, dtype=float)
        w = self.V_inv @ a
        q = float(a @ w)
        self._pending.append(a)
        self.b += y * a
        self.logdet_V += math.log1p(q)
        self.t += 1
        self._since_refresh += 1
        if self._since_refresh >= REFRESH_EVERY:
            self.refresh()
            return self
        # Sherman-Morrison on V^{-1}; theta_hat moves along w by the scaled residual
        gain = (y - float(a @ self.theta_hat)) / (1.0 + q)
        self.V_inv -= w[:, None] * (w / (1.0 + q))
        self.theta_hat += gain * w
        if self._arms is not None:
            aw = self._arms @ w
            self._widths_sq -= aw * aw / (1.0 + q)
            self._means += gain * aw
        return self

    def replay(self, A, y):
        """Absorb a batch of past observations at once (rows of ``A`` with rewards ``y``)."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        y = np.asarray(y, dtype=float)
        if A.shape[0] == 0:
            return self
        self._V = self.V + A.T @ A
        self.b += A.T @ y
        self.t += A.shape[0]
        self.refresh()
        return self

    def refresh(self):
        """Rebuild V^{-1}, theta_hat, log|V| and cached widths from scratch."""
        L = self._cholesky()
        self.V_inv = scipy.linalg.cho_solve(L, np.eye(self.config.p), check_finite=False)
        self.V_inv = 0.5 * (self.V_inv + self.V_inv.T)
        self.theta_hat = scipy.linalg.cho_solve(L, self.b, check_finite=False)
        self.logdet_V = 2.0 * float(np.sum(np.log(np.diag(L[0]))))
        if self._arms is not None:
            self._sync_arms()
        self._since_refresh = 0
        return self

    def _sync_arms(self):
        self._widths_sq = np.sum((self._arms @ self.V_inv) * self._arms, axis=1)
        self._means = self._arms @ self.theta_hat

    def _cholesky(self):
        try:
            return scipy.linalg.cho_factor(self.V, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError("Gram matrix lost positive definiteness") from exc

    def _check_arms(self, arms):
        arms = np.atleast_2d(np.asarray(arms, dtype=float))
        if arms.shape[0] == 0:
            raise InvalidInputError("empty arm list")
        if arms.shape[1] != self.config.p:
            raise InvalidInputError(f"arms have dim {arms.shape[1]}, expected {self.config.p}")
        if np.any(np.linalg.norm(arms, axis=1) > 1.0 + ARM_NORM_SLACK):
            raise InvalidInputError("arm norm exceeds 1")
        return arms


def init(config):
    return LowOFUL(config)
