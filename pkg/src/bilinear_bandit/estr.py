"""Explore-subspace-then-refine and the two comparison learners.

Every runner takes the environment, the two arm sets, a config and an
explicit generator, and returns a :class:`RegretTrace` whose ``info`` dict
carries the quantities the invariant checks need.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .completion import (
    METHODS,
    ObservationTable,
    complete,
    factored_regression,
    sin_theta_product,
    subspace_bases,
)
from .env import RegretTrace, _arms, best_pair
from .errors import InvalidInputError, SingularMatrixError
from .linalg import RANK_TOL, min_nonzero_singular
from .lowoful import LowOFUL, LowOfulConfig, lambda_perp_default
from .selection import N_RANDOM_DEFAULT, select_subset

log = logging.getLogger(__name__)

GAMMA_MODES = ("simplified-sec6", "paper-eq11")
_WARNED = set()  # (T1, d1*d2) pairs already reported, so batch runs warn once


@dataclass
class EstrConfig:
    T: int
    S_F: float
    S_2: float
    S_r: float
    r: int = 1
    T1: int | None = None  # None: use default_T1 once the stage-1 arms are known
    lam: float = 1.0
    delta: float = 0.05
    c: float = 1.0
    gamma_mode: str = "simplified-sec6"
    completion_method: str = "burer-monteiro"
    C1: float = 1.0
    n_random: int = N_RANDOM_DEFAULT
    lam_cross: float | None = None

    def __post_init__(self):
        if self.T < 2:
            raise InvalidInputError("T must be at least 2")
        if self.T1 is not None and not 1 <= self.T1 < self.T:
            raise InvalidInputError(f"need 1 <= T1 < T, got T1={self.T1}, T={self.T}")
        if not 0 < self.S_r <= self.S_2 * (1 + 1e-12) or self.S_2 > self.S_F * (1 + 1e-12):
            raise InvalidInputError("need 0 < S_r <= S_2 <= S_F")
        if self.gamma_mode not in GAMMA_MODES:
            raise InvalidInputError(f"gamma_mode must be one of {GAMMA_MODES}")
        if self.completion_method not in METHODS:
            raise InvalidInputError(f"completion_method must be one of {METHODS}")


@dataclass
class SubspaceEstimate:
    U_hat: np.ndarray
    U_hat_perp: np.ndarray
    V_hat: np.ndarray
    V_hat_perp: np.ndarray
    gamma: float = 0.0

    @property
    def r(self):
        return self.U_hat.shape[1]

    @property
    def left(self):
        return np.hstack([self.U_hat, self.U_hat_perp])

    @property
    def right(self):
        return np.hstack([self.V_hat, self.V_hat_perp])

    @classmethod
    def from_theta(cls, theta_hat, r, gamma=0.0):
        return cls(*subspace_bases(theta_hat, r), gamma=gamma)


def low_dim(d1, d2, r):
    """Number of coordinates touching the estimated subspaces."""
    return (d1 + d2) * r - r * r


# -- stage 1 -----------------------------------------------------------------


def stage1_schedule(T1, d1, d2, rng):
    """Pairs ``(i, j)`` pulled in stage 1, as a shuffled ``(T1, 2)`` int array.

    Every pair appears ``T1 // (d1 d2)`` times; the remainder is made of
    distinct pairs chosen uniformly without replacement.
    """
    if T1 < 1:
        raise InvalidInputError("T1 must be >= 1")
    n = d1 * d2
    reps, rem = divmod(int(T1), n)
    flat = np.concatenate([np.tile(np.arange(n), reps), rng.choice(n, size=rem, replace=False)])
    flat = flat[rng.permutation(flat.size)]
    return np.stack(np.divmod(flat, d2), axis=1)


def estimate_theta(K_hat, X, Z):
    """Solve ``X theta Z^T = K_hat`` with two LU solves."""
    X, Z = np.asarray(X, dtype=float), np.asarray(Z, dtype=float)
    for name, M in (("X", X), ("Z", Z)):
        if M.shape[0] != M.shape[1]:
            raise InvalidInputError(f"{name} must be square")
        S = np.linalg.svd(M, compute_uv=False)
        if S[-1] <= RANK_TOL * max(S[0], 1.0):
            raise SingularMatrixError(f"{name} is singular to working precision")
    left = scipy.linalg.solve(X, K_hat)
    return scipy.linalg.solve(Z, left.T).T


def gamma_bound(config, X, Z, sigma, d, r, T1):
    """Subspace-error bound gamma(T1) and the matching ``B_perp``; returns ``(gamma, B_perp)``."""
    if config.gamma_mode == "simplified-sec6":
        B_perp = config.S_2 * sigma**2 * d**3 * r / T1
        return B_perp / config.S_2, B_perp
    inv_x = 1.0 / min_nonzero_singular(X)
    inv_z = 1.0 / min_nonzero_singular(Z)
    gamma = (
        (inv_x**2 * inv_z**2 / config.S_r**2)
        * config.C1**2
        * (config.S_2 / config.S_r) ** 4
        * sigma**2
        * d**3
        * r
        / T1
    )
    return gamma, config.S_2 * gamma


def default_T1(T, X, Z, S_2, S_r, sigma, d, r):
    """Balance heuristic for the exploration length with its unknown constant set to 1.

    Clamped to ``[d1 d2, T - 1]`` so every pair is observed at least once
    when the horizon allows it.
    """
    inv_x = 1.0 / min_nonzero_singular(X)
    inv_z = 1.0 / min_nonzero_singular(Z)
    T1 = inv_x * inv_z * S_2**2 / S_r**3 * sigma * d**1.5 * math.sqrt(r * T)
    n_pairs = np.shape(X)[0] * np.shape(Z)[0]
    return int(min(max(round(T1), n_pairs, 1), T - 1))


# -- stage 2 -----------------------------------------------------------------


def rearrange(M, r):
    """Reorder the trailing two axes of ``M`` so the (r:, r:) block comes last.

    Block order is (:r, :r), (r:, :r), (:r, r:), (r:, r:), each flattened
    column-major. Leading axes are kept, so this works on stacks of matrices.
    """
    M = np.asarray(M, dtype=float)
    lead = M.shape[:-2]
    blocks = (M[..., :r, :r], M[..., r:, :r], M[..., :r, r:], M[..., r:, r:])
    return np.concatenate([b.swapaxes(-1, -2).reshape(*lead, -1) for b in blocks], axis=-1)


def rotate_and_vectorize(X_arms, Z_arms, est):
    """Vectorised rotated arms, one row per pair ``(i, j)`` at row ``i * N2 + j``.

    The last ``(d1 - r)(d2 - r)`` coordinates come from the two complements.
    """
    X, Z = _arms(X_arms), _arms(Z_arms)
    if X.shape[1] != est.U_hat.shape[0] or Z.shape[1] != est.V_hat.shape[0]:
        raise InvalidInputError("arm dimensions do not match the subspace estimate")
    if est.U_hat.shape[1] != est.V_hat.shape[1]:
        raise InvalidInputError("left and right ranks differ")
    Xr = X @ est.left
    Zr = Z @ est.right
    outer = Xr[:, None, :, None] * Zr[None, :, None, :]
    vec = rearrange(outer, est.r)
    return vec.reshape(X.shape[0] * Z.shape[0], -1)


def rotated_theta(theta, est):
    """``theta*`` expressed in the same coordinates as :func:`rotate_and_vectorize`."""
    return rearrange(est.left.T @ theta @ est.right, est.r)


def vectorize_pairs(X_arms, Z_arms):
    """``vec(x z^T)`` (column-major) for every pair, row ``i * N2 + j``."""
    X, Z = _arms(X_arms), _arms(Z_arms)
    outer = X[:, None, :, None] * Z[None, :, None, :]
    return outer.swapaxes(-1, -2).reshape(X.shape[0] * Z.shape[0], -1)


@dataclass
class _Game:
    """Per-run precomputation shared by the loops."""

    means: np.ndarray  # N1 x N2 mean rewards
    gaps: np.ndarray  # N1 x N2 instantaneous regrets
    best: tuple = field(default=())

    @classmethod
    def build(cls, env, X, Z):
        i, j, value = best_pair(env, X, Z)
        means = env.reward_matrix(X, Z)
        gaps = value - means
        return cls(means=means, gaps=np.maximum(gaps, 0.0), best=(i, j, value))


def _ucb_loop(algo, arms_vec, means_flat, gaps_flat, noise, tracker=None):
    """Run ``algo`` for ``len(noise)`` rounds over a fixed arm matrix."""
    algo.bind_arms(arms_vec)
    inst = np.empty(len(noise))
    for t in range(len(noise)):
        idx, _ = algo.select()
        algo.update(arms_vec[idx], means_flat[idx] + noise[t])
        inst[t] = gaps_flat[idx]
        if tracker is not None:
            tracker.observe(algo)
    return inst


class _WidthTracker:
    """Watches sqrt(beta) for monotonicity and the peak log-det ratio."""

    def __init__(self, algo):
        self.last = algo.sqrt_beta()
        self.monotone = True
        self.max_logdet_ratio = 0.0

    def observe(self, algo):
        sb = algo.sqrt_beta()
        if sb < self.last * (1 - 1e-12):
            self.monotone = False
        self.last = sb
        self.max_logdet_ratio = max(self.max_logdet_ratio, algo.logdet_V - algo.logdet_Lambda)


def run_estr(env, X_arms, Z_arms, config, rng, track=True):
    X, Z = _arms(X_arms), _arms(Z_arms)
    N1, d1 = X.shape
    N2, d2 = Z.shape
    r, d = config.r, max(d1, d2)
    game = _Game.build(env, X, Z)

    # stage 1: explore a well-conditioned d1 x d2 grid of pairs
    sel_x = select_subset(X, config.n_random, rng)
    sel_z = select_subset(Z, config.n_random, rng)
    Xs, Zs = X[list(sel_x.indices)], Z[list(sel_z.indices)]
    T1 = config.T1 if config.T1 is not None else default_T1(
        config.T, Xs, Zs, config.S_2, config.S_r, env.sigma, d, r
    )
    if T1 < d1 * d2 and (T1, d1 * d2) not in _WARNED:
        _WARNED.add((T1, d1 * d2))
        log.warning("T1=%d < d1*d2=%d: some stage-1 cells stay unobserved", T1, d1 * d2)
    sched = stage1_schedule(T1, d1, d2, rng)
    gi = np.asarray(sel_x.indices)[sched[:, 0]]
    gj = np.asarray(sel_z.indices)[sched[:, 1]]
    ys = game.means[gi, gj] + env.draw_noise(rng, T1)
    table = ObservationTable(d1, d2).record_many(sched[:, 0], sched[:, 1], ys)
    stage1 = game.gaps[gi, gj]

    K_tilde, mask = table.averaged()
    comp = complete(K_tilde, mask, r, method=config.completion_method)
    theta_hat = estimate_theta(comp.K_hat, Xs, Zs)
    gamma, B_perp = gamma_bound(config, Xs, Zs, env.sigma, d, r, T1)
    est = SubspaceEstimate.from_theta(theta_hat, r, gamma=gamma)

    # stage 2: LowOFUL in rotated coordinates
    T2 = config.T - T1
    p, k = d1 * d2, low_dim(d1, d2, r)
    lam_perp = lambda_perp_default(T2, k, config.lam)
    lcfg = LowOfulConfig(
        p=p,
        k=k,
        lam=config.lam,
        lam_perp=lam_perp,
        B=config.S_F,
        B_perp=B_perp,
        sigma=env.sigma,
        delta=config.delta,
        c=config.c,
        lam_cross=config.lam_cross,
        k_core=r * r if config.lam_cross is not None else None,
    )
    algo = LowOFUL(lcfg)
    tracker = _WidthTracker(algo) if track else None
    arms_vec = rotate_and_vectorize(X, Z, est)
    stage2 = _ucb_loop(
        algo, arms_vec, game.means.ravel(), game.gaps.ravel(), env.draw_noise(rng, T2), tracker
    )

    info = {
        "T1": T1,
        "T2": T2,
        "k": k,
        "p": p,
        "lam_perp": lam_perp,
        "B_perp": B_perp,
        "gamma": gamma,
        "selection": (sel_x, sel_z),
        "completion": comp,
        "theta_hat": theta_hat,
        "estimate": est,
        "stage1_regret": float(stage1.sum()),
        "best": game.best,
    }
    if track:
        info.update(
            beta_monotone=tracker.monotone,
            max_logdet_ratio=tracker.max_logdet_ratio,
            theta_rotated=rotated_theta(env.theta_star, est),
        )
    return RegretTrace(
        "estr-os" if config.completion_method == "optspace-style" else "estr-bm",
        np.concatenate([stage1, stage2]),
        info,
    )


def run_oful_baseline(env, X_arms, Z_arms, config, rng, track=False):
    """Plain OFUL over ``vec(x z^T)``: LowOFUL with ``k = p`` and a uniform penalty."""
    X, Z = _arms(X_arms), _arms(Z_arms)
    game = _Game.build(env, X, Z)
    p = X.shape[1] * Z.shape[1]
    lcfg = LowOfulConfig(
        p=p,
        k=p,
        lam=config.lam,
        lam_perp=config.lam,
        B=config.S_F,
        B_perp=config.S_F,
        sigma=env.sigma,
        delta=config.delta,
        c=config.c,
    )
    algo = LowOFUL(lcfg)
    tracker = _WidthTracker(algo) if track else None
    inst = _ucb_loop(
        algo,
        vectorize_pairs(X, Z),
        game.means.ravel(),
        game.gaps.ravel(),
        env.draw_noise(rng, config.T),
        tracker,
    )
    info = {"best": game.best}
    if track:
        info.update(beta_monotone=tracker.monotone, max_logdet_ratio=tracker.max_logdet_ratio)
    return RegretTrace("oful", inst, info)


# -- implicit subspace exploration ---------------------------------------------


def isse_knots(T):
    """Refit times ``round(10^(m/2))`` for m = 1, 2, ... up to T, deduplicated."""
    knots, m = [], 1
    while True:
        t = int(round(10 ** (m / 2)))
        if t > T:
            return knots
        if not knots or t != knots[-1]:
            knots.append(t)
        m += 1


def _isse_refit(X, Z, rows, cols, ys, r):
    theta_hat, _ = factored_regression(X, Z, rows, cols, ys, r)
    if not np.all(np.isfinite(theta_hat)):
        raise SingularMatrixError("non-finite subspace refit")
    return SubspaceEstimate.from_theta(theta_hat, r)


def run_isse(env, X_arms, Z_arms, config, rng, track=False):
    """LowOFUL whose subspace is re-estimated from all past data at geometric knots.

    Before the first knot the learner is plain OFUL on unrotated arms. At a
    knot ``t'`` the state is rebuilt in the new coordinates with
    ``B_perp = S_2 sigma^2 d^3 r / t'`` and every past observation replayed.
    """
    X, Z = _arms(X_arms), _arms(Z_arms)
    N1, d1 = X.shape
    N2, d2 = Z.shape
    r, d, T = config.r, max(d1, d2), config.T
    p, k = d1 * d2, low_dim(d1, d2, r)
    game = _Game.build(env, X, Z)
    means, gaps = game.means.ravel(), game.gaps.ravel()
    noise = env.draw_noise(rng, T)
    lam_perp = lambda_perp_default(T, k, config.lam)

    base = LowOfulConfig(
        p=p, k=p, lam=config.lam, lam_perp=config.lam, B=config.S_F, B_perp=config.S_F,
        sigma=env.sigma, delta=config.delta, c=config.c,
    )
    algo = LowOFUL(base)
    arms_vec = vectorize_pairs(X, Z)
    algo.bind_arms(arms_vec)

    knots = set(isse_knots(T))
    pulled = np.empty(T, dtype=np.int64)
    ys = np.empty(T)
    inst = np.empty(T)
    refits, skipped = 0, 0
    for t in range(T):
        if (t + 1) in knots and t > 0:
            rows, cols = np.divmod(pulled[:t], N2)
            try:
                est = _isse_refit(X, Z, rows, cols, ys[:t], r)
            except (np.linalg.LinAlgError, ArithmeticError, InvalidInputError) as exc:
                log.warning("ISSE refit at t=%d skipped: %s", t + 1, exc)
                skipped += 1
            else:
                arms_vec = rotate_and_vectorize(X, Z, est)
                cfg = replace(
                    base, k=k, lam_perp=lam_perp, B_perp=config.S_2 * env.sigma**2 * d**3 * r / (t + 1)
                )
                algo = LowOFUL(cfg)
                algo.replay(arms_vec[pulled[:t]], ys[:t])
                algo.bind_arms(arms_vec)
                refits += 1
        idx, _ = algo.select()
        y = means[idx] + noise[t]
        algo.update(arms_vec[idx], y)
        pulled[t], ys[t], inst[t] = idx, y, gaps[idx]

    return RegretTrace("isse", inst, {"best": game.best, "refits": refits, "skipped_refits": skipped})


def tail_bound_terms(theta_star, U_star, S_star, V_star, est, k):
    """Both sides of the tail inequality for the rotated parameter.

    Returns ``(||theta_rot[k:]||^2, ||U_perp^T U*||_F^2 ||S*||_2^2 ||V_perp^T V*||_F^2)``.
    """
    tail = rotated_theta(theta_star, est)[k:]
    rhs = (
        np.linalg.norm(est.U_hat_perp.T @ U_star) ** 2
        * float(np.max(S_star)) ** 2
        * np.linalg.norm(est.V_hat_perp.T @ V_star) ** 2
    )
    return float(tail @ tail), float(rhs)


def wedin_terms(env, est, theta_hat):
    """``(sin-theta product, ||theta_hat - theta*||_F^2 / s_r^2)``."""
    lhs = sin_theta_product(est.U_hat_perp, env.U_star, est.V_hat_perp, env.V_star)
    rhs = np.linalg.norm(theta_hat - env.theta_star) ** 2 / env.s_r**2
    return lhs, float(rhs)
