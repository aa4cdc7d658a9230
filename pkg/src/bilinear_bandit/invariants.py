"""Per-run algebraic checks that must hold exactly (up to rounding) in every run."""

import math
from dataclasses import dataclass, replace

import numpy as np

from .env import BilinearEnvironment, derive_rng, generate_sphere_arms, make_low_rank_theta
from .estr import (
    EstrConfig,
    low_dim,
    rotate_and_vectorize,
    run_estr,
    run_oful_baseline,
    tail_bound_terms,
    wedin_terms,
)

REL_SLACK = 1e-9
ABS_SLACK = 1e-12


@dataclass(frozen=True)
class Check:
    name: str
    lhs: float
    rhs: float
    ok: bool
    run: str = ""

    def __str__(self):
        state = "ok" if self.ok else "VIOLATED"
        return f"{self.run:>24s}  {self.name:<22s} {self.lhs:.6g} <= {self.rhs:.6g}  {state}"


def _leq(name, lhs, rhs, run=""):
    lhs, rhs = float(lhs), float(rhs)
    return Check(name, lhs, rhs, lhs <= rhs * (1 + REL_SLACK) + ABS_SLACK, run)


def check_estr_run(env, X, Z, trace, lam=1.0, run=""):
    """All invariants of one tracked ESTR run; returns a list of :class:`Check`."""
    info = trace.info
    est, k = info["estimate"], info["k"]
    d1, d2 = env.shape
    r = est.r
    out = []

    tail, rhs = tail_bound_terms(env.theta_star, env.U_star, env.svd.S[: env.r], env.V_star, est, k)
    out.append(_leq("tail-bound", tail, rhs, run))

    lhs, rhs = wedin_terms(env, est, info["theta_hat"])
    out.append(_leq("wedin-transfer", lhs, rhs, run))

    out.append(_leq("stage1-regret", info["stage1_regret"], 2.0 * env.S_2 * info["T1"], run))

    budget = 2.0 * k * math.log1p(info["T2"] / lam)
    out.append(_leq("logdet-budget", info["max_logdet_ratio"], budget, run))

    out.append(Check("beta-monotone", 0.0, 0.0, bool(info["beta_monotone"]), run))

    kk = d1 * d2 - (d1 - r) * (d2 - r)
    out.append(Check("k-formula", float(k), float(kk), k == kk == low_dim(d1, d2, r), run))

    left, right = est.left, est.right
    orth = max(
        np.abs(left.T @ left - np.eye(d1)).max(), np.abs(right.T @ right - np.eye(d2)).max()
    )
    out.append(_leq("basis-orthogonality", orth, 1e-8, run))

    vec = rotate_and_vectorize(X, Z, est)
    err = np.abs(vec @ info["theta_rotated"] - env.reward_matrix(X, Z).ravel()).max()
    out.append(_leq("rotation-identity", err, 1e-10, run))
    return out


def check_oful_run(trace, config, p, run=""):
    budget = 2.0 * p * math.log1p(config.T / config.lam)
    return [
        _leq("logdet-budget", trace.info["max_logdet_ratio"], budget, run),
        Check("beta-monotone", 0.0, 0.0, bool(trace.info["beta_monotone"]), run),
    ]


@dataclass
class RandomRunSpec:
    """Problem drawn for one randomized invariant run."""

    d1: int
    d2: int
    r: int
    sigma: float
    n1: int
    n2: int
    T: int
    T1: int
    c: float
    gamma_mode: str
    completion_method: str


def random_spec(rng, T=1500):
    d1, d2 = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    r = int(rng.integers(1, min(d1, d2, 3) + 1))
    return RandomRunSpec(
        d1=d1,
        d2=d2,
        r=r,
        sigma=float(rng.choice([0.0, 0.01, 0.1, 0.5])),
        n1=d1 + int(rng.integers(0, 9)),
        n2=d2 + int(rng.integers(0, 9)),
        T=T,
        T1=int(rng.integers(1, 4) * d1 * d2),
        c=float(rng.choice([0.1, 0.5, 1.0])),
        gamma_mode=str(rng.choice(["simplified-sec6", "paper-eq11"])),
        completion_method=str(rng.choice(["burer-monteiro", "optspace-style"])),
    )


def run_checks(spec, seed, rep, lam=1.0, delta=0.05):
    """Draw a problem from ``spec`` and check one ESTR run and one OFUL run on it."""
    rng = derive_rng(seed, "check", rep)
    X = generate_sphere_arms(spec.n1, spec.d1, rng)
    Z = generate_sphere_arms(spec.n2, spec.d2, rng)
    theta = make_low_rank_theta(spec.d1, spec.d2, spec.r, 1.0, rng)
    env = BilinearEnvironment(theta, spec.sigma, spec.r)
    cfg = EstrConfig(
        T=spec.T,
        S_F=env.S_F,
        S_2=env.S_2,
        S_r=env.s_r,
        r=spec.r,
        T1=min(spec.T1, spec.T - 1),
        lam=lam,
        delta=delta,
        c=spec.c,
        gamma_mode=spec.gamma_mode,
        completion_method=spec.completion_method,
    )
    label = f"rep={rep} d={spec.d1}x{spec.d2} r={spec.r}"
    trace = run_estr(env, X, Z, cfg, rng, track=True)
    checks = check_estr_run(env, X, Z, trace, lam=lam, run=label)
    short = replace(cfg, T=min(spec.T, 500), T1=None)
    oful = run_oful_baseline(env, X, Z, short, rng, track=True)
    checks += check_oful_run(oful, short, spec.d1 * spec.d2, run=label)
    return checks


def spec_from_experiment(config, T1=None):
    T1 = T1 if T1 is not None else (config.T1 or config.d1 * config.d2)
    return RandomRunSpec(
        d1=config.d1,
        d2=config.d2,
        r=config.r,
        sigma=config.sigma,
        n1=config.n_arms_left,
        n2=config.n_arms_right,
        T=config.T,
        T1=min(T1, config.T - 1),
        c=config.c,
        gamma_mode=config.gamma_mode,
        completion_method="burer-monteiro",
    )


def check_many(n_runs, seed=0, spec=None, T=1500):
    """``n_runs`` checked runs; problems are randomized unless a fixed ``spec`` is given."""
    checks = []
    for rep in range(n_runs):
        s = spec
        if s is None:
            s = random_spec(derive_rng(seed, "check", "spec", rep), T=T)
        elif rep % 2:
            s = replace(s, completion_method="optspace-style")
        checks += run_checks(s, seed, rep)
    return checks
