"""Fully constrained least squares by ADMM.

Solves, column by column but vectorized over all columns,

    min_c 0.5 ||y - S c||^2   s.t.  c >= 0,  1^T c = 1,

splitting ``c = z`` with the nonnegativity on ``z`` and the sum-to-one folded
into the ``c``-update, which is an equality-constrained linear solve.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import ContractError


@dataclass(frozen=True)
class AbundanceConfig:
    admm_rho: float = 1.0
    max_iters: int = 2000
    primal_tol: float = 1e-8
    dual_tol: float = 1e-8

    def __post_init__(self):
        if not (self.admm_rho > 0 and self.max_iters > 0 and self.primal_tol > 0 and self.dual_tol > 0):
            raise ContractError("abundance config values must be positive")


@dataclass(frozen=True, eq=False)
class AbundanceInfo:
    primal_residual: float
    dual_residual: float
    iters: int
    converged: bool


class AbundanceConvergenceWarning(RuntimeWarning):
    pass


def _factor(gram: np.ndarray, rho: float):
    k = len(gram)
    b_inv = np.linalg.inv(gram + rho * np.eye(k))
    w1 = b_inv.sum(axis=1)
    return b_inv, w1, w1.sum()


def solve_coeffs(s, ys, cfg: AbundanceConfig = AbundanceConfig(), return_info: bool = False):
    """Coefficients (K, T) of the columns of ``ys`` (L, T) on the columns of ``s`` (L, K)."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(ys, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if s.ndim != 2 or y.ndim != 2 or s.shape[0] != y.shape[0]:
        raise ContractError(f"shape mismatch: s {s.shape}, ys {y.shape}")
    k = s.shape[1]
    if np.linalg.matrix_rank(s) < k:
        raise ContractError("vertex matrix is rank deficient")
    # the problem is invariant to a common scaling of s and y; normalize it away
    scale = np.linalg.norm(s, 2)
    s, y = s / scale, y / scale
    gram = s.T @ s
    sty = s.T @ y
    rho = cfg.admm_rho
    b_inv, w1, w11 = _factor(gram, rho)

    t = y.shape[1]
    z = np.full((k, t), 1.0 / k)
    u = np.zeros((k, t))
    c = z
    r_norm = d_norm = np.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        w = b_inv @ (sty + rho * (z - u))
        c = w - np.outer(w1, (w.sum(axis=0) - 1.0) / w11)
        z_old = z
        z = np.maximum(c + u, 0.0)
        u = u + c - z
        r_norm = np.abs(c - z).max()
        d_norm = rho * np.abs(z - z_old).max()
        if r_norm <= cfg.primal_tol and d_norm <= cfg.dual_tol:
            break
        if it % 10 == 0:
            if r_norm > 10.0 * d_norm:
                rho *= 2.0
                u /= 2.0
            elif d_norm > 10.0 * r_norm:
                rho /= 2.0
                u *= 2.0
            else:
                continue
            b_inv, w1, w11 = _factor(gram, rho)
    converged = r_norm <= cfg.primal_tol and d_norm <= cfg.dual_tol
    info = AbundanceInfo(float(r_norm), float(d_norm), it, bool(converged))
    if return_info:
        return c, info
    if not converged:
        warnings.warn(
            f"FCLS ADMM stopped after {it} iterations (primal {r_norm:.2e}, dual {d_norm:.2e})",
            AbundanceConvergenceWarning,
            stacklevel=2,
        )
    return c
