import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from helpers import points_in_simplex, random_simplex
from oracles import extreme_points_1d, min_area_triangle

from ossmf import mvcu
from ossmf.geometry import ContractError, ToleranceConfig, chart_from_q, in_robust_simplex, rebuild_chart
from ossmf.metrics import asad
from ossmf.mvcu import DegenerateDataError, MvcuConfig

seeds = st.integers(0, 2**32 - 1)


def dilated(s, factor):
    """Simplex ``s`` scaled about its centroid."""
    m = s.mean(axis=1, keepdims=True)
    return rebuild_chart(m + factor * (s - m))


def triangle_batch(seed, n=50, purity=0.8):
    rng = np.random.default_rng(seed)
    s = random_simplex(rng, 3)
    return s, points_in_simplex(rng, s, n, purity)


def oracle_triangle(ys):
    # points sum to one, so the first two coordinates are an affine chart of the plane
    tri = min_area_triangle(ys[:, :2], grid=180)
    return np.column_stack([tri, 1.0 - tri.sum(axis=1)]).T


@pytest.mark.parametrize("q, expected", [(np.eye(3), 0.0), (np.diag([2.0, 1.0]), -np.log(2.0)), (np.diag([0.5, 0.5]), np.log(4.0))])
def test_objective_examples(q, expected):
    assert mvcu.objective(chart_from_q(q)) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("y, expected", [((0.5, 0.5), 0.0), ((-0.1, 1.1), 0.1), ((0.6, 0.6), 0.2)])
def test_feasibility_violation_examples(y, expected):
    assert mvcu.feasibility_violation(chart_from_q(np.eye(2)), [y]) == pytest.approx(expected, abs=1e-15)


def test_config_validation():
    with pytest.raises(ContractError):
        MvcuConfig(step_shrink=1.0)
    with pytest.raises(ContractError):
        MvcuConfig(hinge_weight=0.0)
    assert MvcuConfig().weight(4) == 40.0


def test_solve_k2_example():
    ys = np.array([(0.1, 0.9), (0.5, 0.5), (0.9, 0.1)])
    warm = rebuild_chart(np.array([[-0.3, 1.2], [1.3, -0.2]]))
    res = mvcu.solve(ys, warm)
    assert res.converged
    got = res.chart.s[:, np.argsort(res.chart.s[0])]
    np.testing.assert_allclose(got, [[0.1, 0.9], [0.9, 0.1]], atol=1e-4)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_solve_vertices_keep_identity(k):
    res = mvcu.solve(np.eye(k), chart_from_q(np.eye(k)))
    assert res.converged
    np.testing.assert_allclose(res.chart.q, np.eye(k), atol=1e-12)


def test_result_objective_matches_chart():
    _, ys = triangle_batch(0)
    res = mvcu.solve(ys, mvcu.init_from_batch(ys))
    assert res.objective == pytest.approx(-res.chart.log_abs_det_q, abs=1e-10)
    assert res.max_violation >= 0


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1])
def test_solve_k3_matches_triangle_oracle(seed):
    s, ys = triangle_batch(seed, n=30, purity=1.0)
    # at least two points on each edge
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.1, 0.9, size=(3, 2))
    edge = [s[:, [1, 2]] @ np.array([t, 1 - t]) for t in a[0]]
    edge += [s[:, [0, 2]] @ np.array([t, 1 - t]) for t in a[1]]
    edge += [s[:, [0, 1]] @ np.array([t, 1 - t]) for t in a[2]]
    ys = np.vstack([ys, edge])
    chart = mvcu.init_from_batch(ys)
    assert asad(oracle_triangle(ys), chart.s) < 0.5


def test_init_from_batch_encloses_vertices():
    for k in (2, 3, 4):
        chart = mvcu.init_from_batch(np.eye(k))
        assert mvcu.feasibility_violation(chart, np.eye(k)) == pytest.approx(0.0, abs=1e-9)


def test_init_from_batch_degenerate():
    with pytest.raises(DegenerateDataError):
        mvcu.init_from_batch([(0.5, 0.5)])
    with pytest.raises(DegenerateDataError):
        # three points on one line in the K = 3 plane
        mvcu.init_from_batch([(0.2, 0.3, 0.5), (0.3, 0.3, 0.4), (0.4, 0.3, 0.3)])


@pytest.mark.slow
def test_init_from_batch_triangle():
    s, ys = triangle_batch(3)
    a = ys.mean(axis=0)
    start = rebuild_chart(mvcu.regular_simplex(a, np.ones(3), 2.0))
    res = mvcu.solve(ys, start)
    assert mvcu.objective(start) >= res.objective
    chart = mvcu.init_from_batch(ys)
    assert asad(oracle_triangle(ys), chart.s) < 1.0


def test_regular_simplex_is_regular():
    v = mvcu.regular_simplex(np.full(4, 0.25), np.ones(4), 2.0)
    np.testing.assert_allclose(v.sum(axis=0), 1.0)
    np.testing.assert_allclose(np.linalg.norm(v - 0.25, axis=0), 2.0)
    d = np.linalg.norm(v[:, :, None] - v[:, None, :], axis=0)
    off = d[~np.eye(4, dtype=bool)]
    np.testing.assert_allclose(off, off[0])


def test_successive_projection_finds_vertices():
    rng = np.random.default_rng(7)
    s = random_simplex(rng, 4)
    x = np.vstack([points_in_simplex(rng, s, 40, 0.7), s.T])
    assert set(mvcu.successive_projection(x, 4).tolist()) == {40, 41, 42, 43}


@given(seeds)
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 5))
    ys = rng.normal(size=(20, k))
    q = np.eye(k) + 0.3 * rng.normal(size=(k, k))
    c = ys @ q.T
    # stay away from hinge kinks
    if np.abs(c).min() < 1e-3 or abs(np.linalg.det(q)) < 1e-2:
        return
    lam = 3.0
    grad = mvcu.penalized_gradient(q, ys, lam)
    h = 1e-6
    fd = np.zeros_like(q)
    for idx in np.ndindex(q.shape):
        e = np.zeros_like(q)
        e[idx] = h
        fd[idx] = (mvcu.penalized_objective(q + e, ys, lam) - mvcu.penalized_objective(q - e, ys, lam)) / (2 * h)
    assert np.linalg.norm(fd - grad) <= 1e-5 * np.linalg.norm(grad)


@settings(max_examples=30)
@given(seeds, st.floats(1.05, 2.0))
def test_volume_monotone_under_feasible_warm_start(seed, factor):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 5))
    s = random_simplex(rng, k)
    ys = points_in_simplex(rng, s, 10 * k, 0.8)
    warm = dilated(s, factor)
    assert mvcu.feasibility_violation(warm, ys) <= 1e-12
    res = mvcu.solve(ys, warm)
    assert res.objective <= mvcu.objective(warm) + 1e-10


@settings(max_examples=30)
@given(seeds)
def test_converged_results_enclose_inputs(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 5))
    s = random_simplex(rng, k)
    ys = points_in_simplex(rng, s, 10 * k, 0.8) + 1e-3 * rng.normal(size=(10 * k, k))
    ys /= ys.sum(axis=1, keepdims=True)
    res = mvcu.solve(ys, dilated(s, 1.5))
    if res.converged and res.max_violation <= 1e-6:
        tol = ToleranceConfig(1e-6, 1e-6)
        assert all(in_robust_simplex(res.chart, y, tol) for y in ys)


@settings(max_examples=30)
@given(seeds)
def test_permutation_invariant_optimum(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 5))
    s = random_simplex(rng, k)
    ys = points_in_simplex(rng, s, 10 * k, 0.8)
    warm = dilated(s, 1.3)
    a = mvcu.solve(ys, warm)
    b = mvcu.solve(ys[rng.permutation(len(ys))], warm)
    assert a.objective == pytest.approx(b.objective, abs=1e-8)
    perm = np.argmin(np.abs(a.chart.s[:, :, None] - b.chart.s[:, None, :]).sum(axis=0), axis=1)
    np.testing.assert_allclose(a.chart.s, b.chart.s[:, perm], atol=1e-6)


@pytest.mark.parametrize("seed", range(100))
def test_k2_matches_extreme_points(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 2.0, size=int(rng.integers(3, 40)))
    ys = np.column_stack([x, 1.0 - x])
    chart = mvcu.init_from_batch(ys)
    ref = extreme_points_1d(ys)
    got = chart.s[:, np.argsort(chart.s[0])]
    assert np.abs(got - ref).max() < 1e-4
