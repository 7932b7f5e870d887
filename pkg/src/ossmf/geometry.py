"""Simplex charts in reduced coordinates and the membership/facet predicates.

A chart ``Q`` maps a reduced observation ``y`` to its barycentric coordinates
``c = Q y`` with respect to the simplex whose vertices are the columns of
``S = Q^{-1}``.  All inequality tests are inclusive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

RCOND_FLOOR = 1e-12


class ContractError(ValueError):
    """Raised when an operation receives inputs outside its contract."""


class SingularChartError(ContractError):
    """Raised when a vertex matrix is singular or too ill-conditioned."""

    def __init__(self, rcond: float):
        super().__init__(f"vertex matrix rejected: reciprocal condition {rcond:.3e} < {RCOND_FLOOR:g}")
        self.rcond = rcond


@dataclass(frozen=True, eq=False)
class SimplexChart:
    q: np.ndarray
    s: np.ndarray
    log_abs_det_q: float

    @property
    def k(self) -> int:
        return self.q.shape[0]

    @property
    def vertices(self) -> np.ndarray:
        return self.s


@dataclass(frozen=True)
class ToleranceConfig:
    """Slacks of the robust simplex (``eps1``, ``eps2``), facet band ``eta``
    and redundancy radius ``d``."""

    eps1: float = 1e-4
    eps2: float = 1e-4
    eta: float = 0.03
    d: float = 0.7

    def __post_init__(self):
        for name in ("eps1", "eps2", "eta", "d"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ContractError(f"{name} must be finite and nonnegative, got {v}")
        if self.eta > 1 or self.d > 1:
            raise ContractError("eta and d must lie in [0, 1]")


@dataclass(frozen=True)
class LabeledObservation:
    y: np.ndarray
    coeffs: np.ndarray
    facet_index: int | None
    origin_index: int


@dataclass(frozen=True, eq=False)
class RelevantSet:
    """Retained observations, stored column-compatible as row arrays.

    ``facets`` holds -1 for members that are not near any facet.
    """

    ys: np.ndarray
    coeffs: np.ndarray
    facets: np.ndarray
    origins: np.ndarray
    _origin_set: frozenset = field(default=frozenset(), repr=False)

    @classmethod
    def empty(cls, k: int) -> "RelevantSet":
        return cls(np.empty((0, k)), np.empty((0, k)), np.empty(0, dtype=int), np.empty(0, dtype=int))

    @classmethod
    def from_members(cls, members: Iterable[LabeledObservation], k: int) -> "RelevantSet":
        members = list(members)
        if not members:
            return cls.empty(k)
        origins = np.array([m.origin_index for m in members], dtype=int)
        if len(set(origins.tolist())) != len(origins):
            raise ContractError("duplicate origin_index in relevant set")
        return cls(
            np.array([m.y for m in members], dtype=float),
            np.array([m.coeffs for m in members], dtype=float),
            np.array([-1 if m.facet_index is None else m.facet_index for m in members], dtype=int),
            origins,
            frozenset(origins.tolist()),
        )

    def __len__(self) -> int:
        return len(self.origins)

    def __contains__(self, origin: int) -> bool:
        return origin in self._origin_set

    @property
    def members(self) -> list[LabeledObservation]:
        return [
            LabeledObservation(self.ys[i], self.coeffs[i], None if self.facets[i] < 0 else int(self.facets[i]), int(self.origins[i]))
            for i in range(len(self))
        ]

    def append(self, y: np.ndarray, coeffs: np.ndarray, facet: int | None, origin: int) -> "RelevantSet":
        if origin in self._origin_set:
            raise ContractError(f"origin_index {origin} already in relevant set")
        return RelevantSet(
            np.vstack([self.ys, y[None, :]]),
            np.vstack([self.coeffs, coeffs[None, :]]),
            np.append(self.facets, -1 if facet is None else facet),
            np.append(self.origins, origin),
            self._origin_set | {origin},
        )

    def subset(self, mask: np.ndarray) -> "RelevantSet":
        origins = self.origins[mask]
        return RelevantSet(self.ys[mask], self.coeffs[mask], self.facets[mask], origins, frozenset(origins.tolist()))

    def relabel(self, chart: SimplexChart, tol: ToleranceConfig) -> "RelevantSet":
        """Recompute cached coordinates and facet labels under ``chart``."""
        coeffs = self.ys @ chart.q.T
        facets = np.where(near_facet_mask(coeffs, tol), np.argmin(coeffs, axis=1), -1) if len(self) else self.facets
        return RelevantSet(self.ys, coeffs, facets, self.origins, self._origin_set)


def _vec(y, k: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or (k is not None and y.shape[0] != k):
        raise ContractError(f"expected a vector of length {k}, got shape {y.shape}")
    return y


def rebuild_chart(s) -> SimplexChart:
    """Build a chart from a vertex matrix (columns are vertices)."""
    s = np.array(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ContractError(f"vertex matrix must be square, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise SingularChartError(0.0)
    rcond = 1.0 / np.linalg.cond(s, 1) if np.any(s) else 0.0
    if not np.isfinite(rcond) or rcond < RCOND_FLOOR:
        raise SingularChartError(float(np.nan_to_num(rcond)))
    q = np.linalg.inv(s)
    _, logdet = np.linalg.slogdet(q)
    return SimplexChart(q, s, float(logdet))


def chart_from_q(q) -> SimplexChart:
    """Build a chart from ``Q`` directly."""
    q = np.array(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ContractError(f"chart matrix must be square, got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise SingularChartError(0.0)
    rcond = 1.0 / np.linalg.cond(q, 1) if np.any(q) else 0.0
    if not np.isfinite(rcond) or rcond < RCOND_FLOOR:
        raise SingularChartError(float(np.nan_to_num(rcond)))
    s = np.linalg.inv(q)
    _, logdet = np.linalg.slogdet(q)
    return SimplexChart(q, s, float(logdet))


def barycentric(chart: SimplexChart, y) -> np.ndarray:
    return chart.q @ _vec(y, chart.k)


def g_min(c) -> float:
    c = _vec(c)
    if c.size == 0:
        raise ContractError("g_min of an empty vector")
    return float(c.min())


def h_gap(c) -> float:
    return float(1.0 - _vec(c).sum())


def facet_of(c) -> int:
    c = _vec(c)
    if c.size == 0:
        raise ContractError("facet_of of an empty vector")
    # np.argmin returns the first minimum, i.e. the lowest index on ties
    return int(np.argmin(c))


def robust_mask(coeffs: np.ndarray, tol: ToleranceConfig) -> np.ndarray:
    """Row-wise membership in the robust simplex for an (n, K) coordinate array."""
    return (coeffs.min(axis=1) >= -tol.eps1) & (np.abs(1.0 - coeffs.sum(axis=1)) <= tol.eps2)


def near_facet_mask(coeffs: np.ndarray, tol: ToleranceConfig) -> np.ndarray:
    """Row-wise membership in the robust facet band (robust simplex and min coordinate <= eta)."""
    return robust_mask(coeffs, tol) & (coeffs.min(axis=1) <= tol.eta)


def relevant_mask(coeffs: np.ndarray, tol: ToleranceConfig) -> np.ndarray:
    """Predicate of the post-update retention rule: outside the robust simplex or near a facet."""
    inside = robust_mask(coeffs, tol)
    return ~inside | (inside & (coeffs.min(axis=1) <= tol.eta))


def in_robust_simplex(chart: SimplexChart, y, tol: ToleranceConfig) -> bool:
    c = barycentric(chart, y)
    return bool(c.min() >= -tol.eps1 and abs(1.0 - c.sum()) <= tol.eps2)


def near_facet(chart: SimplexChart, y, tol: ToleranceConfig) -> bool:
    return bool(barycentric(chart, y).min() <= tol.eta)


def same_facet_members(chart: SimplexChart, y, v: RelevantSet, tol: ToleranceConfig) -> list[LabeledObservation]:
    return [v.members[i] for i in np.flatnonzero(_same_facet_mask(chart, y, v, tol))]


def _same_facet_mask(chart: SimplexChart, y, v: RelevantSet, tol: ToleranceConfig) -> np.ndarray:
    if len(v) == 0:
        return np.zeros(0, dtype=bool)
    c = barycentric(chart, y)
    coeffs = v.ys @ chart.q.T
    return near_facet_mask(coeffs, tol) & (np.argmin(coeffs, axis=1) == facet_of(c))


def is_redundant(chart: SimplexChart, y, neighbors: Sequence | np.ndarray, tol: ToleranceConfig) -> bool:
    """True when some neighbor lies strictly closer than ``d`` in chart coordinates."""
    if isinstance(neighbors, RelevantSet):
        pts = neighbors.ys
    else:
        pts = [n.y if isinstance(n, LabeledObservation) else n for n in neighbors]
        pts = np.asarray(pts, dtype=float).reshape(-1, chart.k)
    if len(pts) == 0:
        return False
    dist = np.linalg.norm((_vec(y, chart.k)[None, :] - pts) @ chart.q.T, axis=1)
    return bool(dist.min() < tol.d)
