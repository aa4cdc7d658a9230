"""Pick d arms whose stacked d x d matrix is as well conditioned as possible.

Exact maximisation of the smallest singular value over d-subsets is
combinatorial, so we take the best of a relaxed solution (E-optimal design
weights from Frank-Wolfe, rounded to the top-d arms) and a handful of
uniformly random subsets.
"""

from dataclasses import dataclass

import numpy as np

from .env import _arms
from .errors import DegenerateArmSetError, InvalidInputError
from .linalg import numerical_rank

N_RANDOM_DEFAULT = 20
FW_ITERS_DEFAULT = 500
MAX_RETRIES = 100


@dataclass(frozen=True)
class SubsetSelection:
    indices: tuple
    score: float
    source: str  # "relaxation" or "random-candidate"

    def matrix(self, arms):
        return _arms(arms)[list(self.indices)]


def score_subset(arms, indices):
    """Smallest singular value of the square matrix of the selected arms (0 if singular)."""
    A = _arms(arms)
    n, d = A.shape
    idx = list(indices)
    if len(idx) != d:
        raise InvalidInputError(f"need exactly {d} indices, got {len(idx)}")
    if len(set(idx)) != d:
        raise InvalidInputError("indices must be distinct")
    if min(idx) < 0 or max(idx) >= n:
        raise InvalidInputError("index out of range")
    S = np.linalg.svd(A[idx], compute_uv=False)
    return float(S[-1]) if numerical_rank(S) == d else 0.0


def relaxation_weights(arms, iters=FW_ITERS_DEFAULT, step=None):
    """Frank-Wolfe on the simplex for ``max_w lambda_min(sum_i w_i x_i x_i^T)``.

    Each step moves mass toward the arm with the largest squared projection on
    the current minimal eigenvector. ``step(k)`` defaults to ``2 / (k + 2)``.
    """
    A = _arms(arms)
    n, d = A.shape
    if numerical_rank(np.linalg.svd(A, compute_uv=False)) < d:
        raise InvalidInputError("arms do not span the space")
    step = step or (lambda k: 2.0 / (k + 2.0))
    w = np.full(n, 1.0 / n)
    for k in range(iters):
        M = (A.T * w) @ A
        _, vecs = np.linalg.eigh(M)
        v = vecs[:, 0]
        i = int(np.argmax((A @ v) ** 2))
        g = step(k)
        w *= 1.0 - g
        w[i] += g
    return w


def design_min_eig(arms, w):
    A = _arms(arms)
    return float(np.linalg.eigvalsh((A.T * w) @ A)[0])


def _top_d(w, d):
    # stable sort on -w keeps the lower index first among equal weights
    return tuple(sorted(int(i) for i in np.argsort(-w, kind="stable")[:d]))


def _random_subset(n, d, rng):
    return tuple(sorted(int(i) for i in rng.choice(n, size=d, replace=False)))


def select_subset(arms, n_random=N_RANDOM_DEFAULT, rng=None, iters=FW_ITERS_DEFAULT):
    A = _arms(arms)
    n, d = A.shape
    if n < d:
        raise InvalidInputError(f"need at least {d} arms, got {n}")
    rng = rng if rng is not None else np.random.default_rng(0)

    candidates = [(_top_d(relaxation_weights(A, iters), d), "relaxation")]
    candidates += [(_random_subset(n, d, rng), "random-candidate") for _ in range(n_random)]
    scored = [(score_subset(A, idx), idx, src) for idx, src in candidates]
    best = max(scored, key=lambda c: c[0])  # max() keeps the first maximal element

    retries = 0
    while best[0] == 0.0 and retries < MAX_RETRIES:
        idx = _random_subset(n, d, rng)
        s = score_subset(A, idx)
        if s > 0.0:
            best = (s, idx, "random-candidate")
        retries += 1
    if best[0] == 0.0:
        raise DegenerateArmSetError(f"no nonsingular {d}-subset found after {MAX_RETRIES} retries")
    return SubsetSelection(indices=best[1], score=best[0], source=best[2])

