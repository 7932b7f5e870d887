"""Vertex matching, spectral angles and coefficient errors."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .abundance import AbundanceConfig, solve_coeffs
from .geometry import ContractError

EXHAUSTIVE_MAX_K = 8


@dataclass(frozen=True)
class EvalRecord:
    t: int
    asad_deg: float
    rmse: float
    step_seconds: float = 0.0
    updated: bool = False
    relevant_count: int = 0


def angle_matrix(s_ref, s_est) -> np.ndarray:
    """Pairwise angles in degrees: entry (i, j) is between ``s_ref[:, i]`` and ``s_est[:, j]``."""
    a = np.asarray(s_ref, dtype=float)
    b = np.asarray(s_est, dtype=float)
    if a.shape != b.shape or a.ndim != 2:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    if np.any(na == 0) or np.any(nb == 0):
        raise ContractError("zero column")
    cos = (a / na).T @ (b / nb)
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def match_vertices(s_ref, s_est) -> np.ndarray:
    """Permutation ``p`` minimizing the summed angle between ``s_ref[:, k]`` and ``s_est[:, p[k]]``.

    Exhaustive for K <= 8 (first minimum in lexicographic order), Hungarian otherwise.
    """
    cost = angle_matrix(s_ref, s_est)
    k = cost.shape[0]
    if k > EXHAUSTIVE_MAX_K:
        _, cols = linear_sum_assignment(cost)
        return cols
    perms = np.array(list(permutations(range(k))))
    totals = cost[np.arange(k), perms].sum(axis=1)
    return perms[int(np.argmin(totals))]


def asad(s_ref, s_est, match: bool = True) -> float:
    """Average spectral angle (degrees) between paired columns, after matching by default."""
    s_est = np.asarray(s_est, dtype=float)
    if match:
        s_est = s_est[:, match_vertices(s_ref, s_est)]
    return float(np.mean(np.diag(angle_matrix(s_ref, s_est))))


def rmse(c_ref, c_est) -> float:
    a = np.asarray(c_ref, dtype=float)
    b = np.asarray(c_est, dtype=float)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2) / a.size))


def evaluate_estimate(s_true, c_true, y, s_est, abundance_cfg: AbundanceConfig = AbundanceConfig(), with_rmse: bool = True):
    """aSAD of ambient-space vertex estimates and, optionally, RMSE of the FCLS
    coefficients of all of ``y`` (L, T) against ``c_true``.

    Returns ``(asad_deg, rmse, c_est)`` with ``c_est`` rows aligned to ``s_true``.
    """
    s_true = np.asarray(s_true, dtype=float)
    s_est = np.asarray(s_est, dtype=float)
    if s_true.shape != s_est.shape:
        raise ContractError(f"vertex shape mismatch: {s_true.shape} vs {s_est.shape}")
    perm = match_vertices(s_true, s_est)
    matched = s_est[:, perm]
    angle = asad(s_true, matched, match=False)
    if not with_rmse:
        return angle, float("nan"), None
    c_est = solve_coeffs(matched, y, abundance_cfg)
    return angle, rmse(c_true, c_est), c_est


def evaluate_checkpoint(dataset, basis, state, abundance_cfg: AbundanceConfig = AbundanceConfig(), report=None) -> EvalRecord:
    from .subspace import lift

    if state.chart.k != dataset.s_true.shape[1] or basis.k != state.chart.k:
        raise ContractError("rank mismatch between dataset, basis and engine state")
    s_est = lift(basis, state.chart.s)
    angle, err, _ = evaluate_estimate(dataset.s_true, dataset.c_true, dataset.y_noisy, s_est, abundance_cfg)
    return EvalRecord(
        state.t,
        angle,
        err,
        0.0 if report is None else report.elapsed,
        False if report is None else report.updated,
        len(state.relevant),
    )
