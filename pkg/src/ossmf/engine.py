"""The online SSMF state machine.

One :func:`step` per observation.  An observation outside the robust simplex
triggers a warm-started MVCU solve on the relevant set plus the newcomer,
after which only observations that violate or lie near the facets of the new
simplex are kept.  Otherwise the chart is left untouched and the newcomer is
stored only if it is near a facet and at least ``d`` away (in barycentric
coordinates) from every stored observation labeled with the same facet.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np

from . import mvcu
from .geometry import ContractError, RelevantSet, SimplexChart, ToleranceConfig, relevant_mask
from .mvcu import DegenerateDataError, MvcuConfig, MvcuResult


@dataclass(frozen=True)
class EngineStats:
    updates: int = 0
    retained: int = 0
    solver_iters: int = 0
    failures: int = 0


@dataclass(frozen=True, eq=False)
class EngineState:
    chart: SimplexChart
    relevant: RelevantSet
    tol: ToleranceConfig
    mvcu_cfg: MvcuConfig
    t: int
    stats: EngineStats = EngineStats()
    # naive baseline only: buffer whose first ``t`` rows are every observation seen
    history: np.ndarray | None = None

    @property
    def naive(self) -> bool:
        return self.history is not None


@dataclass(frozen=True, eq=False)
class StepReport:
    t: int
    updated: bool
    retained: bool
    pruned_count: int
    relevant_count: int
    solver: MvcuResult | None = None
    failed: bool = False
    elapsed: float = 0.0

    def key(self) -> tuple:
        """Everything but timing, for determinism checks."""
        solver = None if self.solver is None else (self.solver.chart.q.tobytes(), self.solver.iters, self.solver.converged)
        return (self.t, self.updated, self.retained, self.pruned_count, self.relevant_count, self.failed, solver)


def new_engine(init_batch, tol: ToleranceConfig = ToleranceConfig(), mvcu_cfg: MvcuConfig = MvcuConfig(), naive: bool = False) -> EngineState:
    """Bootstrap from a batch: enclosing chart plus the batch members the retention rule keeps."""
    batch = np.asarray(init_batch, dtype=float)
    if batch.ndim != 2:
        raise ContractError("init batch must be an (n, K) array")
    chart = mvcu.init_from_batch(batch, mvcu_cfg)
    coeffs = batch @ chart.q.T
    keep = relevant_mask(coeffs, tol)
    n, k = batch.shape
    full = RelevantSet(batch, coeffs, np.full(n, -1), np.arange(n), frozenset(range(n)))
    relevant = full.subset(keep).relabel(chart, tol)
    return EngineState(chart, relevant, tol, mvcu_cfg, n, EngineStats(retained=len(relevant)), batch.copy() if naive else None)


def step(state: EngineState, y_t) -> tuple[EngineState, StepReport]:
    start = time.perf_counter()
    y = np.asarray(y_t, dtype=float)
    k = state.chart.k
    if y.shape != (k,):
        raise ContractError(f"expected a reduced observation of length {k}, got {y.shape}")
    tol, chart, rel = state.tol, state.chart, state.relevant
    origin = state.t
    history = None if state.history is None else _push(state.history, origin, y)
    c = chart.q @ y
    cmin = c.min()
    inside = cmin >= -tol.eps1 and abs(1.0 - c.sum()) <= tol.eps2

    if inside:
        retained = False
        stats = state.stats
        if cmin <= tol.eta:
            f = int(np.argmin(c))
            same = rel.facets == f
            if not same.any() or np.linalg.norm(rel.coeffs[same] - c, axis=1).min() >= tol.d:
                rel = rel.append(y, c, f, origin)
                retained = True
                stats = replace(stats, retained=stats.retained + 1)
        new = EngineState(chart, rel, tol, state.mvcu_cfg, origin + 1, stats, history)
        return new, StepReport(origin + 1, False, retained, 0, len(rel), elapsed=time.perf_counter() - start)

    pool = rel.append(y, c, None, origin)
    points = history[: origin + 1] if history is not None else pool.ys
    try:
        result = mvcu.solve(points, chart, state.mvcu_cfg)
    except DegenerateDataError:
        result = None
    stats = state.stats
    if result is None or not result.converged:
        # keep the previous chart and hold on to the newcomer
        stats = replace(
            stats,
            updates=stats.updates + (result is not None),
            retained=stats.retained + 1,
            failures=stats.failures + 1,
            solver_iters=stats.solver_iters + (result.iters if result else 0),
        )
        new = replace(state, relevant=pool, t=state.t + 1, stats=stats, history=history)
        report = StepReport(origin + 1, result is not None, True, 0, len(pool), result, True, time.perf_counter() - start)
        return new, report

    chart = result.chart
    coeffs = pool.ys @ chart.q.T
    keep = relevant_mask(coeffs, tol)
    rel = RelevantSet(pool.ys, coeffs, pool.facets, pool.origins, pool._origin_set).subset(keep).relabel(chart, tol)
    retained = bool(keep[-1])
    pruned = int((~keep[:-1]).sum())
    stats = replace(
        stats,
        updates=stats.updates + 1,
        retained=stats.retained + retained,
        solver_iters=stats.solver_iters + result.iters,
    )
    new = replace(state, chart=chart, relevant=rel, t=state.t + 1, stats=stats, history=history)
    return new, StepReport(origin + 1, True, retained, pruned, len(rel), result, False, time.perf_counter() - start)


def _push(buf: np.ndarray, n: int, y: np.ndarray) -> np.ndarray:
    # rows past ``n`` are unused by earlier states, so writing there in place is safe
    if n >= len(buf):
        buf = np.vstack([buf, np.empty_like(buf)])
    buf[n] = y
    return buf


def estimate(state: EngineState) -> np.ndarray:
    """Current vertices (columns) in reduced coordinates."""
    return state.chart.s.copy()


Sink = Callable[[StepReport, "np.ndarray | None"], None]


def run_stream(state: EngineState, ys: Iterable, checkpoint_every: int = 100, sink: Sink | None = None) -> EngineState:
    """Fold :func:`step` over ``ys``; the sink gets every report plus a vertex
    snapshot every ``checkpoint_every`` steps (``None`` otherwise)."""
    for i, y in enumerate(ys, start=1):
        state, report = step(state, y)
        if sink is not None:
            snap = estimate(state) if checkpoint_every and i % checkpoint_every == 0 else None
            sink(report, snap)
    return state
