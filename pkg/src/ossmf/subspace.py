"""Signal-subspace estimation and reduced coordinates.

Observations are rows.  Reduced coordinates are ``x = U^T y`` rescaled onto
the hyperplane ``a^T x = 1`` fitted to the data, so noiseless mixtures keep
their coordinates exactly and the sum-to-one constraint holds for every
projected observation.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import ContractError
from .mvcu import DegenerateDataError

NORMALIZER_FLOOR = 1e-12


class NearOrthogonalError(ContractError):
    """Raised when an observation has (almost) no component along the data hyperplane."""


@dataclass(frozen=True, eq=False)
class AffineBasis:
    u: np.ndarray  # (L, K), orthonormal columns
    normal: np.ndarray  # (K,), reduced hyperplane a with a^T x = 1
    mean: np.ndarray  # (L,), running mean of absorbed observations
    second: np.ndarray  # (L, L), running mean of y y^T
    count: int

    @property
    def l(self) -> int:
        return self.u.shape[0]

    @property
    def k(self) -> int:
        return self.u.shape[1]


def _fix_signs(u: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(u), axis=0)
    return u * np.sign(u[idx, np.arange(u.shape[1])])


def _normal(u: np.ndarray, mean: np.ndarray, second: np.ndarray) -> np.ndarray:
    # least-squares a minimizing sum_j (a^T U^T y_j - 1)^2
    g = u.T @ second @ u
    return np.linalg.lstsq(g, u.T @ mean, rcond=None)[0]


def fit_batch(ys_raw, k: int) -> AffineBasis:
    """Top-``k`` singular subspace of the rows of ``ys_raw``."""
    y = np.asarray(ys_raw, dtype=float)
    if y.ndim != 2 or not 1 <= k <= y.shape[1]:
        raise ContractError(f"need an (n, L) array with 1 <= k <= L, got {y.shape} and k={k}")
    if len(y) < k:
        raise DegenerateDataError(f"{len(y)} observations cannot span a {k}-dimensional subspace")
    _, sv, vt = np.linalg.svd(y, full_matrices=False)
    if sv[k - 1] <= 1e-10 * sv[0]:
        raise DegenerateDataError(f"observations have rank < {k}")
    u = _fix_signs(vt[:k].T)
    mean = y.mean(axis=0)
    second = y.T @ y / len(y)
    return AffineBasis(u, _normal(u, mean, second), mean, second, len(y))


def update(basis: AffineBasis, y_raw) -> AffineBasis:
    """Rank-one update of the running moments, then one block power step.

    The basis becomes ``qr(M u)`` with ``M`` the running second moment, so it
    tracks the top-``k`` eigenspace of all absorbed observations.
    """
    y = np.asarray(y_raw, dtype=float)
    if y.shape != (basis.l,):
        raise ContractError(f"expected an observation of length {basis.l}, got {y.shape}")
    count = basis.count + 1
    mean = basis.mean + (y - basis.mean) / count
    second = basis.second + (np.outer(y, y) - basis.second) / count
    if not np.any(y):
        return replace(basis, mean=mean, second=second, count=count)
    u, r = np.linalg.qr(second @ basis.u)
    u = u * np.sign(np.diag(r))
    return AffineBasis(u, _normal(u, mean, second), mean, second, count)


def project(basis: AffineBasis, y_raw) -> np.ndarray:
    y = np.asarray(y_raw, dtype=float)
    if y.shape[-1] != basis.l:
        raise ContractError(f"expected observations of length {basis.l}, got {y.shape}")
    x = y @ basis.u
    denom = x @ basis.normal
    if np.any(np.abs(denom) < NORMALIZER_FLOOR):
        raise NearOrthogonalError("observation is orthogonal to the data hyperplane")
    return x / denom[..., None] if x.ndim > 1 else x / denom


def lift(basis: AffineBasis, s_reduced) -> np.ndarray:
    """Map reduced vertex columns back to the ambient space."""
    s = np.asarray(s_reduced, dtype=float)
    if s.shape[0] != basis.k:
        raise ContractError(f"expected {basis.k} reduced rows, got {s.shape}")
    return basis.u @ s


def principal_angles(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Principal angles (radians, ascending) between two orthonormal bases.

    Small angles come from sines, which stay accurate where the cosines round to one.
    """
    cos = np.linalg.svd(u1.T @ u2, compute_uv=False)
    sin = np.sort(np.linalg.svd(u2 - u1 @ (u1.T @ u2), compute_uv=False))[: len(cos)]
    return np.where(cos**2 < 0.5, np.arccos(np.clip(cos, -1.0, 1.0)), np.arcsin(np.clip(sin, 0.0, 1.0)))
