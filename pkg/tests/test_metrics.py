from itertools import permutations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import best_permutation

from ossmf import subspace
from ossmf.datagen import DatasetSpec, generate
from ossmf.engine import new_engine
from ossmf.geometry import ContractError
from ossmf.metrics import angle_matrix, asad, evaluate_checkpoint, evaluate_estimate, match_vertices, rmse

seeds = st.integers(0, 2**32 - 1)


def random_vertices(seed, l=20, k=4):
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(l, k))


def test_match_vertices_examples():
    s = random_vertices(0)
    np.testing.assert_array_equal(match_vertices(s, s), np.arange(4))
    np.testing.assert_array_equal(match_vertices(s, s[:, ::-1]), [3, 2, 1, 0])


def test_match_vertices_matches_exhaustive_oracle():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(10, 4)), rng.normal(size=(10, 4))
    assert tuple(match_vertices(a, b)) == best_permutation(angle_matrix(a, b))


def test_match_vertices_hungarian_for_large_k():
    rng = np.random.default_rng(2)
    a = rng.uniform(size=(30, 10))
    perm = rng.permutation(10)
    np.testing.assert_array_equal(a[:, perm][:, match_vertices(a, a[:, perm])], a)


def test_asad_examples():
    s = random_vertices(3)
    assert asad(s, s) == pytest.approx(0.0, abs=1e-6)
    assert asad(s, 2.0 * s) == pytest.approx(0.0, abs=1e-6)
    assert asad(np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]]), match=False) == 90.0


def test_asad_rejects_bad_input():
    with pytest.raises(ContractError):
        asad(np.eye(3), np.eye(2))
    with pytest.raises(ContractError):
        asad(np.eye(2), np.zeros((2, 2)))


def test_rmse_examples():
    rng = np.random.default_rng(4)
    c = rng.uniform(size=(3, 7))
    assert rmse(c, c) == 0.0
    assert rmse(c, c + 0.1) == pytest.approx(0.1, abs=1e-12)
    assert rmse([[1.0], [0.0]], [[0.0], [1.0]]) == 1.0


def test_evaluate_checkpoint_perfect_state():
    ds = generate(DatasetSpec(l=40, t=200, k=3, snr_db=np.inf, seed=5))
    basis = subspace.fit_batch(ds.y_clean.T, 3)
    state = new_engine(subspace.project(basis, ds.s_true.T))
    rec = evaluate_checkpoint(ds, basis, state)
    assert rec.asad_deg == pytest.approx(0.0, abs=1e-6)
    assert rec.rmse < 1e-6
    wrong = new_engine(np.eye(2))
    with pytest.raises(ContractError):
        evaluate_checkpoint(ds, basis, wrong)


def test_evaluate_estimate_recomputation():
    ds = generate(DatasetSpec(l=40, t=200, k=3, seed=6))
    s_est = ds.s_true + 0.05 * np.random.default_rng(6).uniform(size=ds.s_true.shape)
    angle, err, c_est = evaluate_estimate(ds.s_true, ds.c_true, ds.y_noisy, s_est[:, [2, 0, 1]])
    assert err == pytest.approx(np.sqrt(np.mean((ds.c_true - c_est) ** 2)), abs=1e-12)
    assert angle == pytest.approx(asad(ds.s_true, s_est), abs=1e-12)


@given(seeds, st.permutations(range(4)))
def test_asad_invariant_under_joint_permutation(seed, perm):
    a, b = random_vertices(seed), random_vertices(seed + 1)
    perm = list(perm)
    assert asad(a[:, perm], b[:, perm]) == pytest.approx(asad(a, b), abs=1e-10)


@given(seeds, st.lists(st.floats(1e-3, 1e3), min_size=4, max_size=4))
def test_asad_invariant_under_column_scaling(seed, scales):
    a, b = random_vertices(seed), random_vertices(seed + 1)
    assert asad(a, b * np.array(scales)) == pytest.approx(asad(a, b), abs=1e-8)


@given(seeds)
def test_rmse_of_perturbation(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(size=(3, 9))
    delta = rng.normal(size=(3, 9))
    assert rmse(c, c + delta) == pytest.approx(np.linalg.norm(delta) / np.sqrt(27), rel=1e-12)


@given(seeds, st.integers(2, 6))
def test_match_vertices_is_global_optimum(seed, k):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(8, k)), rng.normal(size=(8, k))
    cost = angle_matrix(a, b)
    best = min(cost[np.arange(k), list(p)].sum() for p in permutations(range(k)))
    assert cost[np.arange(k), match_vertices(a, b)].sum() == pytest.approx(best, abs=1e-12)
