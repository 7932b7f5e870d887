"""Warm-startable minimum-volume constrained unmixing.

Minimizes the hinge-penalized volume objective

    F(Q) = -log|det Q| + lam * sum_j sum_i max(0, -[Q y_j]_i)

over charts whose row sums are pinned to the hyperplane carrying the data
(``1^T Q = a^T`` with ``a^T y_j = 1``), which enforces the sum-to-one
constraint exactly.  The hinge term is an exact penalty: once ``lam``
exceeds the constraint multipliers the minimizer is feasible.

Each iteration linearizes only the log-determinant.  Writing the step as
``Q <- (I + E) Q``, the local model is ``-tr(E) + lam * hinge(C + E C)``
in barycentric coordinates ``C = Q Y``, which is an LP in ``E`` with one
slack per constraint, solved by HiGHS.  The LP step is followed by a Newton
correction on the constraints it made binding, using the exact curvature
``tr(E^2) / 2`` of the log-determinant.  A box trust region on ``E`` is
adapted from the ratio of actual to predicted decrease.

Batch initialization starts from a regular simplex at the batch mean, turned
toward the extreme observations found by successive projection and dilated
until it encloses the batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import highspy

from .geometry import RCOND_FLOOR, ContractError, SimplexChart, SingularChartError, chart_from_q, rebuild_chart

LAMBDA_CAP = 1e6
_HIGHS = {
    "output_flag": False,
    "presolve": "off",
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}
# one reusable HiGHS instance; the model is replaced on every call
_SOLVER = None


class DegenerateDataError(ContractError):
    """Raised when observations do not affinely span the simplex dimension."""


@dataclass(frozen=True)
class MvcuConfig:
    """Solver budgets.  ``hinge_weight=None`` resolves to ``10 * K``."""

    hinge_weight: float | None = None
    max_outer_iters: int = 12
    max_inner_iters: int = 200
    grad_tol: float = 1e-8
    step_shrink: float = 0.25
    min_step: float = 1e-12
    feas_tol: float = 1e-6
    init_step: float = 0.1
    max_step: float = 0.5

    def __post_init__(self):
        if self.hinge_weight is not None and not self.hinge_weight > 0:
            raise ContractError("hinge_weight must be positive")
        for name in ("max_outer_iters", "max_inner_iters", "grad_tol", "min_step", "feas_tol", "init_step", "max_step"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive")
        if not 0 < self.step_shrink < 1:
            raise ContractError("step_shrink must lie in (0, 1)")

    def weight(self, k: int) -> float:
        return float(self.hinge_weight) if self.hinge_weight is not None else 10.0 * k


@dataclass(frozen=True, eq=False)
class MvcuResult:
    chart: SimplexChart
    objective: float
    max_violation: float
    iters: int
    converged: bool
    hinge_weight: float = 0.0


def objective(chart: SimplexChart) -> float:
    return -chart.log_abs_det_q


def _points(ys, k: int | None = None) -> np.ndarray:
    y = np.asarray(ys, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    if y.ndim != 2 or y.shape[0] == 0 or (k is not None and y.shape[1] != k):
        raise ContractError(f"expected a nonempty (n, {k}) array of points, got shape {y.shape}")
    return y


def violations(q: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-point violation ``max(-min_i c_i, |1 - sum c|, 0)`` for rows of ``y``."""
    c = y @ q.T
    return np.maximum(np.maximum(-c.min(axis=1), np.abs(1.0 - c.sum(axis=1))), 0.0)


def feasibility_violation(chart: SimplexChart, ys) -> float:
    return float(violations(chart.q, _points(ys, chart.k)).max())


def penalized_objective(q, ys, hinge_weight: float) -> float:
    q = np.asarray(q, dtype=float)
    sign, logdet = np.linalg.slogdet(q)
    if sign == 0:
        return np.inf
    c = _points(ys, q.shape[0]) @ q.T
    return float(-logdet + hinge_weight * np.maximum(-c, 0.0).sum())


def penalized_gradient(q, ys, hinge_weight: float) -> np.ndarray:
    """Gradient of :func:`penalized_objective` with respect to ``Q`` (away from hinge kinks)."""
    q = np.asarray(q, dtype=float)
    y = _points(ys, q.shape[0])
    active = (y @ q.T) < 0
    return -np.linalg.inv(q).T - hinge_weight * active.T.astype(float) @ y


def affine_rank(ys, rtol: float = 1e-9) -> int:
    y = _points(ys)
    if len(y) < 2:
        return 0
    sv = np.linalg.svd(y - y.mean(axis=0), compute_uv=False)
    scale = max(sv[0], np.abs(y).max(), 1.0)
    return int((sv > rtol * scale).sum())


def _check_spread(y: np.ndarray) -> None:
    k = y.shape[1]
    if len(y) < k or affine_rank(y) < k - 1:
        raise DegenerateDataError(f"{len(y)} observations do not affinely span dimension {k - 1}")


def hyperplane(ys) -> np.ndarray:
    """Least-squares normal ``a`` with ``a^T y ~= 1`` for every observation."""
    y = _points(ys)
    a, *_ = np.linalg.lstsq(y, np.ones(len(y)), rcond=None)
    return a


def _pin_row_sums(q: np.ndarray, a: np.ndarray) -> np.ndarray:
    return q + np.outer(np.ones(q.shape[0]), a - q.sum(axis=0)) / q.shape[0]


def _lp_solver() -> highspy.Highs:
    global _SOLVER
    if _SOLVER is None:
        _SOLVER = highspy.Highs()
        for key, value in _HIGHS.items():
            _SOLVER.setOptionValue(key, value)
    return _SOLVER


def _slp_step(c: np.ndarray, lam: float, radius: float) -> tuple[np.ndarray, float, np.ndarray]:
    """Solve the trust-region LP model of the penalized objective.

    Returns the step ``E``, its predicted decrease and the slacks, shaped
    like ``c``.  Every constraint carries its own slack, so the model is the
    exact linearization of the hinge term.
    """
    n, k = c.shape
    m = n * k
    # columns: E row-major (k*k), then slack i*n + j for constraint (j, i)
    # rows: i*n + j for constraint (j, i), then the k column sums of E
    e_rows = np.arange(k)[:, None, None] * n + np.arange(n)[None, None, :]  # (i, 1, n)
    e_rows = np.broadcast_to(e_rows, (k, k, n))
    e_index = np.concatenate([e_rows, np.broadcast_to(m + np.arange(k)[None, :, None], (k, k, 1))], axis=2)
    e_value = np.concatenate([np.broadcast_to(-c.T[None, :, :], (k, k, n)), np.ones((k, k, 1))], axis=2)
    inf = highspy.kHighsInf
    none = np.zeros(0, dtype=np.int32)
    solver = _lp_solver()
    solver.clearModel()
    solver.addRows(m + k, np.concatenate([np.full(m, -inf), np.zeros(k)]), np.concatenate([c.T.ravel(), np.zeros(k)]), 0, none, none, np.zeros(0))
    solver.addCols(
        k * k + m,
        np.concatenate([-np.eye(k).ravel(), np.full(m, lam)]),
        np.concatenate([np.full(k * k, -radius), np.zeros(m)]),
        np.concatenate([np.full(k * k, radius), np.full(m, inf)]),
        k * k * (n + 1) + m,
        np.concatenate([np.arange(k * k) * (n + 1), k * k * (n + 1) + np.arange(m)]).astype(np.int32),
        np.concatenate([e_index.ravel(), np.arange(m)]).astype(np.int32),
        np.concatenate([e_value.ravel(), -np.ones(m)]),
    )
    solver.run()
    if solver.getModelStatus() != highspy.HighsModelStatus.kOptimal:
        return np.zeros((k, k)), 0.0, np.zeros_like(c)
    x = np.asarray(solver.getSolution().col_value)
    e = x[: k * k].reshape(k, k)
    slack = x[k * k:].reshape(k, n).T
    base = lam * np.maximum(-c, 0.0).sum()
    pred = base - (-np.trace(e) + lam * slack.sum())
    return e, float(pred), slack


@lru_cache(maxsize=None)
def _commutation(k: int) -> np.ndarray:
    # x^T P x = tr(E^2) for x = E.ravel()
    return np.eye(k * k).reshape(k, k, k, k).transpose(0, 1, 3, 2).reshape(k * k, k * k)


def _newton_step(c: np.ndarray, e_lp: np.ndarray, slack: np.ndarray, lam: float) -> np.ndarray | None:
    """Second-order correction on the constraints the LP step made binding.

    Minimizes ``-tr(E) + tr(E^2) / 2`` plus the linear penalty of constraints
    still violated at the LP solution, with binding ones held as equalities.
    Where the reduced Hessian is indefinite it is replaced by the identity,
    which turns the step into a projected gradient step.  Returns ``None``
    when the equalities are inconsistent.
    """
    n, k = c.shape
    r = c + c @ e_lp.T
    scale = max(1.0, np.abs(c).max())
    j_bind, i_bind = np.nonzero((np.abs(r) <= 1e-9 * scale) & (slack <= 1e-12))
    # constraint (j, i) reads c_j . E[i] = -c[j, i]
    a = np.zeros((len(j_bind) + k, k, k))
    a[np.arange(len(j_bind)), i_bind] = c[j_bind]
    a[len(j_bind):] = np.eye(k)[:, None, :]
    a = a.reshape(-1, k * k)
    b = np.concatenate([-c[j_bind, i_bind], np.zeros(k)])
    viol = slack > 1e-12
    g = (-np.eye(k) - lam * viol.T.astype(float) @ c).ravel()
    u, sv, vt = np.linalg.svd(a)
    rank = int((sv > 1e-10 * sv[0]).sum())
    x = vt[:rank].T @ ((u[:, :rank].T @ b) / sv[:rank])
    if np.abs(a @ x - b).max() > 1e-9 * scale:
        return None
    z = vt[rank:].T
    if z.shape[1]:
        p = _commutation(k)
        h = z.T @ p @ z
        if np.linalg.eigvalsh(h).min() <= 1e-10:
            # P has eigenvalues +-1; |P| = I is its positive definite modification
            return (x - z @ (z.T @ (x + g))).reshape(k, k)
        x = x - z @ np.linalg.solve(h, z.T @ (p @ x + g))
    return x.reshape(k, k)


def _merit_change(c: np.ndarray, e: np.ndarray, lam: float) -> tuple[float, np.ndarray]:
    """Penalized objective at ``(I + E) Q`` minus ``-log|det Q|``, and the new coordinates."""
    sign, logdet = np.linalg.slogdet(np.eye(len(e)) + e)
    if sign <= 0 or logdet < np.log(RCOND_FLOOR):
        return np.inf, c
    c_new = c + c @ e.T
    return float(-logdet + lam * np.maximum(-c_new, 0.0).sum()), c_new


def solve(ys, warm_start: SimplexChart, cfg: MvcuConfig = MvcuConfig()) -> MvcuResult:
    """Refine ``warm_start`` toward a minimum-volume simplex enclosing ``ys``."""
    k = warm_start.k
    y = _points(ys, k)
    _check_spread(y)

    q = warm_start.q
    row_sums = q.sum(axis=0)
    if np.abs(1.0 - y @ row_sums).max() > 1e-9:
        pinned = _pin_row_sums(q, hyperplane(y))
        if np.linalg.cond(pinned) < 1.0 / RCOND_FLOOR:
            q = pinned

    lam = cfg.weight(k)
    radius = cfg.init_step
    # the log-determinant is tracked relative to the start
    logdet = 0.0
    base = -np.linalg.slogdet(q)[1]
    c = y @ q.T
    hinge = lambda cc: float(np.maximum(-cc, 0.0).sum())
    f = lam * hinge(c)
    best = None
    iters = 0
    converged = False
    stalled = 0
    for _ in range(cfg.max_outer_iters):
        for _ in range(cfg.max_inner_iters):
            iters += 1
            e, pred, slack = _slp_step(c, lam, radius)
            if pred <= cfg.grad_tol * max(1.0, abs(f + base)):
                break
            df, c_trial = _merit_change(c, e, lam)
            f_trial = df - logdet
            rho = (f - f_trial) / pred
            e_nt = _newton_step(c, e, slack, lam)
            if e_nt is not None and np.abs(e_nt).max() < 1.0:
                df_nt, c_nt = _merit_change(c, e_nt, lam)
                if df_nt - logdet < min(f_trial, f):
                    e, f_trial, c_trial = e_nt, df_nt - logdet, c_nt
                    rho = max(rho, 1.0)
            if rho >= 1e-4:
                q = q + e @ q
                c = c_trial
                logdet += np.linalg.slogdet(np.eye(k) + e)[1]
                f = f_trial
                if rho > 0.75 and np.abs(e).max() >= 0.99 * radius:
                    radius = min(2.0 * radius, cfg.max_step)
            else:
                radius *= cfg.step_shrink
                if radius < cfg.min_step:
                    break
        viol = float(np.maximum(-c.min(axis=1), 0.0).max())
        if viol <= cfg.feas_tol:
            converged = True
            best = q
            break
        if best is None or viol < best_viol:
            best, best_viol = q, viol
        if lam >= LAMBDA_CAP:
            stalled += 1
            if stalled > 1:
                break
        lam = min(2.0 * lam, LAMBDA_CAP)
        f = lam * hinge(c) - logdet
        radius = max(radius, cfg.init_step)

    try:
        chart = chart_from_q(best)
    except SingularChartError:
        chart, converged = warm_start, False
    return MvcuResult(chart, objective(chart), feasibility_violation(chart, y), iters, converged, lam)


def _plane_basis(normal: np.ndarray) -> np.ndarray:
    # orthonormal basis (k, k-1) of the directions inside the hyperplane
    _, _, vt = np.linalg.svd(normal[None, :])
    return vt[1:].T


def _unit_template(k: int) -> np.ndarray:
    # unit-circumradius regular simplex in R^{k-1}: centered standard basis, (k-1, k)
    _, _, vt = np.linalg.svd(np.ones((1, k)))
    return vt[1:] * np.sqrt(k / (k - 1.0))


def regular_simplex(center: np.ndarray, normal: np.ndarray, radius: float, rotation: np.ndarray | None = None) -> np.ndarray:
    """Vertices (as columns) of a regular simplex of circumradius ``radius`` centered
    at ``center`` inside the hyperplane orthogonal to ``normal``.

    ``rotation`` is an optional orthogonal (k-1, k-1) matrix applied to the
    template inside the hyperplane.
    """
    k = len(center)
    w = _unit_template(k)
    if rotation is not None:
        w = rotation @ w
    return center[:, None] + radius * _plane_basis(normal) @ w


def successive_projection(x: np.ndarray, k: int) -> np.ndarray:
    """Indices of ``k`` rows of ``x`` picked greedily as the most extreme after
    projecting out the ones already chosen."""
    r = np.array(x, dtype=float)
    picked = []
    for _ in range(k):
        j = int(np.argmax(np.einsum("ij,ij->i", r, r)))
        picked.append(j)
        v = r[j] / np.linalg.norm(r[j])
        r = r - np.outer(r @ v, v)
    return np.array(picked)


def _orientation(y: np.ndarray, center: np.ndarray, plane: np.ndarray) -> np.ndarray:
    """Rotation aligning the template's vertex directions with extreme observations."""
    k = y.shape[1]
    x = (y - center) @ plane
    idx = successive_projection(np.hstack([x, np.ones((len(x), 1))]), k)
    d = x[idx].T
    u, _, vt = np.linalg.svd(d @ _unit_template(k).T)
    return u @ vt


def init_from_batch(ys, cfg: MvcuConfig = MvcuConfig(), min_batch: int = 0, dilation: float = 1.05) -> SimplexChart:
    """Enclose a batch with a dilated regular simplex, then refine it with :func:`solve`.

    The regular simplex sits at the batch mean, is turned so its vertices point
    toward extreme observations and is grown until it contains every point.
    """
    y = _points(ys)
    k = y.shape[1]
    if len(y) < max(k, min_batch):
        raise DegenerateDataError(f"batch of {len(y)} observations is too small for K={k}")
    _check_spread(y)
    a = hyperplane(y)
    m = y.mean(axis=0)
    m = m + (1.0 - a @ m) * a / (a @ a)
    rot = _orientation(y, m, _plane_basis(a))
    unit = rebuild_chart(regular_simplex(m, a, 1.0, rot))
    # barycentric coordinates scale as 1/K + beta / r with the circumradius r
    beta = y @ unit.q.T - 1.0 / k
    r_min = max(float((-k * beta).max()), 0.0)
    if r_min == 0.0:
        r_min = float(np.abs(beta).max() * k) or 1.0
    start = rebuild_chart(regular_simplex(m, a, dilation * r_min, rot))
    return solve(y, start, cfg).chart
