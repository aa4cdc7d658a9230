"""Simulated bilinear bandit: ground truth, arm sets, rewards and regret."""

import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import InternalConsistencyError, InvalidInputError, InvalidRankError
from .linalg import SvdFactors, numerical_rank, random_orthonormal, thin_svd

NORM_SLACK = 1e-12
NOISE_KINDS = ("gaussian", "rademacher")

# stream labels used when deriving child seeds; never reorder
_STREAM_IDS = {"env": 0, "oful": 1, "estr-os": 2, "estr-bm": 3, "isse": 4, "check": 5}


def derive_rng(seed, *key):
    """Philox generator for the stream identified by ``(seed, *key)``.

    String components are mapped to stable integers so the same key always
    yields the same stream regardless of the order streams are requested in.
    """
    words = []
    for k in key:
        if isinstance(k, str):
            words.append(_STREAM_IDS.get(k, zlib.crc32(k.encode())))
        else:
            words.append(int(k))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(words))
    return np.random.Generator(np.random.Philox(ss))


class ArmSet:
    """Finite set of arms in the unit ball that spans its ambient space."""

    def __init__(self, arms):
        arms = np.atleast_2d(np.asarray(arms, dtype=float))
        if arms.ndim != 2 or arms.shape[0] == 0:
            raise InvalidInputError("arm set must be a nonempty (n, dim) array")
        if not np.all(np.isfinite(arms)):
            raise InvalidInputError("arms must be finite")
        norms = np.linalg.norm(arms, axis=1)
        if np.any(norms > 1.0 + NORM_SLACK):
            raise InvalidInputError(f"arm norm {norms.max():.6g} exceeds 1")
        if numerical_rank(np.linalg.svd(arms, compute_uv=False)) < arms.shape[1]:
            raise InvalidInputError("arms do not span the full space")
        self.arms = arms
        self.arms.flags.writeable = False

    @property
    def dim(self):
        return self.arms.shape[1]

    def __len__(self):
        return self.arms.shape[0]

    def __getitem__(self, i):
        return self.arms[i]


def generate_sphere_arms(n, d, rng, max_tries=100):
    """``n`` i.i.d. uniform unit vectors in R^d, redrawn until they span R^d."""
    if n < d:
        raise InvalidInputError(f"need n >= d to span R^{d}, got n={n}")
    for _ in range(max_tries):
        g = rng.standard_normal((n, d))
        arms = g / np.linalg.norm(g, axis=1, keepdims=True)
        try:
            return ArmSet(arms)
        except InvalidInputError:
            continue
    raise InvalidInputError("could not draw a spanning arm set")


def make_low_rank_theta(d1, d2, r, frob_norm, rng):
    """Random rank-r matrix with orthonormal singular vectors and ``||.||_F = frob_norm``.

    Singular values are drawn uniformly from [0.5, 1] before rescaling, so the
    condition number stays below 2.
    """
    if not 1 <= r <= min(d1, d2):
        raise InvalidRankError(f"rank {r} not in [1, {min(d1, d2)}]")
    if frob_norm <= 0:
        raise InvalidInputError("frob_norm must be positive")
    U = random_orthonormal(d1, r, rng)
    V = random_orthonormal(d2, r, rng)
    s = np.sort(rng.uniform(0.5, 1.0, size=r))[::-1]
    s *= frob_norm / np.linalg.norm(s)
    return (U * s) @ V.T


@dataclass
class BilinearEnvironment:
    theta_star: np.ndarray
    sigma: float
    r: int
    noise: str = "gaussian"
    svd: SvdFactors = field(init=False, repr=False)

    def __post_init__(self):
        self.theta_star = np.array(self.theta_star, dtype=float)
        self.theta_star.flags.writeable = False
        if self.sigma < 0:
            raise InvalidInputError("sigma must be nonnegative")
        if self.noise not in NOISE_KINDS:
            raise InvalidInputError(f"noise must be one of {NOISE_KINDS}")
        self.svd = thin_svd(self.theta_star)
        rank = numerical_rank(self.svd.S)
        if rank != self.r:
            raise InvalidRankError(f"theta_star has rank {rank}, expected {self.r}")

    @property
    def shape(self):
        return self.theta_star.shape

    @property
    def S_F(self):
        return float(np.linalg.norm(self.theta_star))

    @property
    def S_2(self):
        return float(self.svd.S[0])

    @property
    def s_r(self):
        return float(self.svd.S[self.r - 1])

    @property
    def U_star(self):
        return self.svd.U[:, : self.r]

    @property
    def V_star(self):
        return self.svd.V[:, : self.r]

    def check_bounds(self, S_F, S_2):
        if self.S_F > S_F * (1 + 1e-12) or self.S_2 > S_2 * (1 + 1e-12):
            raise InvalidInputError("theta_star violates the configured norm bounds")

    def mean_reward(self, x, z):
        return float(np.asarray(x) @ self.theta_star @ np.asarray(z))

    def draw_noise(self, rng, size=None):
        if self.noise == "gaussian":
            return self.sigma * rng.standard_normal(size)
        return self.sigma * (2.0 * rng.integers(0, 2, size=size) - 1.0)

    def sample_reward(self, x, z, rng):
        return self.mean_reward(x, z) + float(self.draw_noise(rng))

    def reward_matrix(self, X, Z):
        """Mean rewards ``X theta Z^T`` for every pair of rows of X and Z."""
        return _arms(X) @ self.theta_star @ _arms(Z).T


def _arms(A):
    return A.arms if isinstance(A, ArmSet) else np.atleast_2d(np.asarray(A, dtype=float))


def best_pair(env, X, Z):
    """Exhaustive argmax of ``x^T theta z``; ties go to the lowest (i, j)."""
    Xa, Za = _arms(X), _arms(Z)
    if Xa.shape[0] == 0 or Za.shape[0] == 0:
        raise InvalidInputError("empty arm set")
    R = env.reward_matrix(Xa, Za)
    flat = int(np.argmax(R))  # row-major argmax returns the first max: lowest (i, j)
    i, j = divmod(flat, R.shape[1])
    return i, j, float(R[i, j])


def instantaneous_regret(env, best_value, x, z):
    gap = best_value - env.mean_reward(x, z)
    if gap < -1e-9:
        raise InternalConsistencyError(f"negative regret {gap:.3g}: best_value is stale")
    return max(gap, 0.0)


@dataclass
class RegretTrace:
    method: str
    instantaneous: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.instantaneous = np.asarray(self.instantaneous, dtype=float)
        if np.any(self.instantaneous < -1e-9):
            raise InternalConsistencyError("negative instantaneous regret")
        self.instantaneous = np.maximum(self.instantaneous, 0.0)

    @property
    def cumulative(self):
        return np.cumsum(self.instantaneous)

    @property
    def T(self):
        return len(self.instantaneous)

    def __len__(self):
        return self.T
