"""Stream driver over raw observations: subspace, engine, logging and checkpoints."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import engine, mvcu, subspace
from .abundance import AbundanceConfig
from .geometry import ContractError, RelevantSet, ToleranceConfig, rebuild_chart
from .metrics import evaluate_estimate
from .mvcu import MvcuConfig

LOG_COLUMNS = ("t", "updated", "retained", "relevant_count", "step_seconds", "asad_deg", "rmse")


@dataclass(frozen=True)
class RunConfig:
    eps1: float = 1e-4
    eps2: float = 1e-4
    eta: float = 0.03
    d: float = 0.7
    k: int = 7
    seed: int = 0
    init_batch: int | None = None  # None: 10 * k
    checkpoint_every: int = 100
    burn_in: int | None = None  # stop tracking the subspace after this many observations; None: never
    reexpress_every: int = 100
    hinge_weight: float | None = None
    max_outer_iters: int = MvcuConfig.max_outer_iters
    max_inner_iters: int = MvcuConfig.max_inner_iters
    admm_rho: float = AbundanceConfig.admm_rho
    admm_max_iters: int = AbundanceConfig.max_iters
    admm_tol: float = AbundanceConfig.primal_tol

    def __post_init__(self):
        if self.k < 2:
            raise ContractError("k must be at least 2")
        if self.init_batch_size < self.k or self.checkpoint_every < 0 or self.reexpress_every < 1:
            raise ContractError("need init_batch >= k, checkpoint_every >= 0 and reexpress_every >= 1")
        self.tolerances  # validates

    @property
    def init_batch_size(self) -> int:
        return 10 * self.k if self.init_batch is None else self.init_batch

    @property
    def tolerances(self) -> ToleranceConfig:
        return ToleranceConfig(self.eps1, self.eps2, self.eta, self.d)

    @property
    def mvcu(self) -> MvcuConfig:
        return MvcuConfig(self.hinge_weight, self.max_outer_iters, self.max_inner_iters)

    @property
    def abundance(self) -> AbundanceConfig:
        return AbundanceConfig(self.admm_rho, self.admm_max_iters, self.admm_tol, self.admm_tol)

    def to_text(self) -> str:
        return "".join(f"{k} = {'none' if v is None else v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_mapping(cls, values: dict, base: "RunConfig | None" = None) -> "RunConfig":
        """Build from string or typed values; unknown keys raise."""
        types = {f.name: f.type for f in fields(cls)}
        parsed = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in types:
                raise ContractError(f"unknown config key {key!r}")
            parsed[key] = _coerce(raw, types[key])
        return replace(base or cls(), **parsed)

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        values = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ContractError(f"config line {n}: expected 'key = value'")
            key, val = line.split("=", 1)
            values[key.strip()] = val.strip()
        return cls.from_mapping(values, base)


def _coerce(raw, typ: str):
    if not isinstance(raw, str):
        return raw
    if raw.lower() == "none":
        if "None" not in typ:
            raise ContractError(f"value 'none' not allowed for type {typ}")
        return None
    try:
        return int(raw) if typ.startswith("int") else float(raw)
    except ValueError as exc:
        raise ContractError(f"cannot parse {raw!r} as {typ}") from exc


@dataclass
class RunResult:
    state: engine.EngineState
    basis: subspace.AffineBasis
    log: list[dict] = field(default_factory=list)
    checkpoints: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def estimate(self) -> np.ndarray:
        """Final vertices in the ambient space, (L, K)."""
        return subspace.lift(self.basis, self.state.chart.s)

    @property
    def step_seconds(self) -> np.ndarray:
        return np.array([row["step_seconds"] for row in self.log])


def reexpress(state: engine.EngineState, old: subspace.AffineBasis, new: subspace.AffineBasis, raw: np.ndarray) -> engine.EngineState:
    """Move the chart and every stored observation into the coordinates of ``new``.

    ``raw`` holds the raw observations, indexed by origin.
    """
    chart = rebuild_chart(subspace.project(new, subspace.lift(old, state.chart.s).T).T)
    rel = state.relevant
    ys = subspace.project(new, raw[rel.origins]) if len(rel) else rel.ys
    rel = RelevantSet(ys, ys @ chart.q.T, rel.facets, rel.origins, rel._origin_set).relabel(chart, state.tol)
    history = state.history
    if history is not None:
        history = history.copy()
        history[: state.t] = subspace.project(new, raw[: state.t])
    return replace(state, chart=chart, relevant=rel, history=history)


def run(y_raw, cfg: RunConfig, naive: bool = False, truth=None, eval_at: set[int] | None = None, with_rmse: bool = True) -> RunResult:
    """Process the rows of ``y_raw`` (T, L) one at a time after a bootstrap batch.

    ``truth`` is an optional ``(s_true, c_true)`` pair; when given, checkpoint
    rows (every ``checkpoint_every`` observations, the last one, and any index in
    ``eval_at``) carry aSAD and, if ``with_rmse``, RMSE over all of ``y_raw``.
    """
    y_raw = np.asarray(y_raw, dtype=float)
    n0 = cfg.init_batch_size
    if y_raw.ndim != 2 or len(y_raw) < n0:
        raise ContractError(f"need at least init_batch={n0} observations, got {len(y_raw)}")
    basis = subspace.fit_batch(y_raw[:n0], cfg.k)
    state = engine.new_engine(subspace.project(basis, y_raw[:n0]), cfg.tolerances, cfg.mvcu, naive=naive)
    # ``tracked`` absorbs every observation; the engine sees coordinates in
    # ``result.basis``, which catches up every ``reexpress_every`` steps
    tracked = basis
    result = RunResult(state, basis)
    eval_at = set(eval_at or ())
    total = len(y_raw)
    for i in range(n0, total):
        if cfg.burn_in is None or tracked.count < cfg.burn_in:
            tracked = subspace.update(tracked, y_raw[i])
            if (i - n0) % cfg.reexpress_every == 0 or tracked.count == cfg.burn_in:
                state = reexpress(state, result.basis, tracked, y_raw)
                result.basis = tracked
        y = subspace.project(result.basis, y_raw[i])
        tic = time.perf_counter()
        state, report = engine.step(state, y)
        elapsed = time.perf_counter() - tic
        row = {
            "t": report.t,
            "updated": int(report.updated),
            "retained": int(report.retained),
            "relevant_count": report.relevant_count,
            "step_seconds": elapsed,
            "asad_deg": "",
            "rmse": "",
        }
        t = report.t
        if (cfg.checkpoint_every and t % cfg.checkpoint_every == 0) or t == total or t in eval_at:
            s_est = subspace.lift(result.basis, state.chart.s)
            result.checkpoints[t] = s_est
            if truth is not None:
                angle, err, _ = evaluate_estimate(truth[0], truth[1], y_raw.T, s_est, cfg.abundance, with_rmse)
                row["asad_deg"] = angle
                row["rmse"] = "" if np.isnan(err) else err
        result.log.append(row)
    result.state = state
    return result


def offline_estimate(y_raw, cfg: RunConfig) -> np.ndarray:
    """Vertices (L, K) of a single batch solve over every observation.

    Serves as the reference when no ground truth is available.
    """
    y_raw = np.asarray(y_raw, dtype=float)
    basis = subspace.fit_batch(y_raw, cfg.k)
    chart = mvcu.init_from_batch(subspace.project(basis, y_raw), cfg.mvcu)
    return subspace.lift(basis, chart.s)
