import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bilinear_bandit.errors import DegenerateArmSetError, InvalidInputError
from bilinear_bandit.linalg import random_orthonormal
from bilinear_bandit.selection import (
    design_min_eig,
    relaxation_weights,
    score_subset,
    select_subset,
)
from conftest import unit_rows


def test_score_basis_and_duplicates():
    assert score_subset(np.eye(3), [0, 1, 2]) == pytest.approx(1.0)
    arms = np.vstack([np.eye(3), [[1.0, 0.0, 0.0]]])
    assert score_subset(arms, [0, 1, 3]) == 0.0


def test_score_matches_svd(rng):
    A = unit_rows(rng, 3, 3)
    assert score_subset(A, [2, 0, 1]) == pytest.approx(np.linalg.svd(A, compute_uv=False)[-1])


def test_score_input_errors():
    with pytest.raises(InvalidInputError):
        score_subset(np.eye(3), [0, 1])
    with pytest.raises(InvalidInputError):
        score_subset(np.eye(3), [0, 1, 1])
    with pytest.raises(InvalidInputError):
        score_subset(np.eye(3), [0, 1, 5])


@given(st.integers(0, 2**32 - 1))
def test_score_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    A = unit_rows(rng, 6, 4)
    Q = random_orthonormal(4, 4, rng)
    idx = [0, 2, 3, 5]
    assert abs(score_subset(A @ Q, idx) - score_subset(A, idx)) <= 1e-8


def test_relaxation_symmetric_cases():
    w = relaxation_weights(np.eye(2))
    assert np.allclose(w, [0.5, 0.5], atol=0.02)
    w = relaxation_weights(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    assert w[0] + w[1] == pytest.approx(0.5, abs=0.02)
    assert w.sum() == pytest.approx(1.0) and np.all(w >= 0)


def test_relaxation_rejects_non_spanning():
    with pytest.raises(InvalidInputError):
        relaxation_weights(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_relaxation_beats_random_search():
    rng = np.random.default_rng(11)
    A = unit_rows(rng, 16, 8)
    fw = design_min_eig(A, relaxation_weights(A, iters=500))
    # oracle: best of 10^4 random simplex points, evaluated independently
    W = rng.dirichlet(np.ones(16), size=10_000)
    M = np.einsum("wn,ni,nj->wij", W, A, A)
    best_random = np.linalg.eigvalsh(M)[:, 0].max()
    assert fw >= 0.9 * best_random


def test_select_basis_without_random_candidates():
    sel = select_subset(np.eye(4), n_random=0)
    assert sel.indices == (0, 1, 2, 3) and sel.score == pytest.approx(1.0)
    assert sel.source == "relaxation"


def test_select_is_argmax_over_candidates():
    rng = np.random.default_rng(2)
    A = unit_rows(rng, 16, 8)
    sel = select_subset(A, n_random=20, rng=np.random.default_rng(9))
    # replay the candidate stream: same generator, same draws
    rep = np.random.default_rng(9)
    cands = [tuple(sorted(rep.choice(16, 8, replace=False))) for _ in range(20)]
    assert all(sel.score >= score_subset(A, c) - 1e-15 for c in cands)
    assert sel.score == score_subset(A, sel.indices) > 0


def test_select_is_deterministic(rng):
    A = unit_rows(rng, 16, 8)
    a = select_subset(A, rng=np.random.default_rng(4))
    b = select_subset(A, rng=np.random.default_rng(4))
    assert a == b


def test_select_exhaustive_small_case(rng):
    A = unit_rows(rng, 6, 3)
    best = max(score_subset(A, c) for c in itertools.combinations(range(6), 3))
    sel = select_subset(A, n_random=20, rng=rng)
    # not guaranteed optimal, but never worse than the relaxation candidate and always valid
    assert 0 < sel.score <= best + 1e-15


def test_select_degenerate():
    with pytest.raises(InvalidInputError):
        select_subset(np.eye(3)[:2], n_random=0)
    # a rank-1 arm set has no nonsingular subset at all
    with pytest.raises((DegenerateArmSetError, InvalidInputError)):
        select_subset(np.array([[1.0, 0.0], [0.5, 0.0], [0.2, 0.0]]), n_random=3)
