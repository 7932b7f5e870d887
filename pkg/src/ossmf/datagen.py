"""Seeded synthetic mixtures ``Y = S C + N``.

Random streams come from numpy's Philox counter-based generator (64-bit key),
with independent substreams for the basis, the coefficients and the noise
spawned from one ``SeedSequence(seed)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .geometry import ContractError

PROBE_DRAWS = 100_000
MIN_ACCEPTANCE = 1e-4


class InfeasiblePurityError(ContractError):
    """Raised when the purity bound leaves (almost) no admissible coefficient vectors."""


@dataclass(frozen=True)
class DatasetSpec:
    l: int = 400
    t: int = 10_000
    k: int = 7
    purity: float = 0.7
    snr_db: float = 15.0
    seed: int = 0
    gaussians_per_basis: tuple[int, int] = (3, 8)
    amplitude_range: tuple[float, float] = (0.2, 1.0)
    min_sad_deg: float = 5.0

    def __post_init__(self):
        if self.k < 2 or self.l < self.k or self.t < 1:
            raise ContractError(f"need k >= 2, l >= k and t >= 1 (got l={self.l}, t={self.t}, k={self.k})")
        if not 1.0 / self.k < self.purity <= 1.0:
            raise InfeasiblePurityError(f"purity {self.purity} must lie in (1/k, 1] = ({1.0 / self.k:.4g}, 1]")
        lo, hi = self.gaussians_per_basis
        if not 1 <= lo <= hi:
            raise ContractError("gaussians_per_basis must be an increasing positive range")


@dataclass(frozen=True, eq=False)
class Dataset:
    s_true: np.ndarray  # (L, K)
    c_true: np.ndarray  # (K, T)
    y_clean: np.ndarray  # (L, T)
    y_noisy: np.ndarray  # (L, T)
    spec: DatasetSpec = field(default_factory=DatasetSpec)


def _streams(seed: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.Philox(ss)) for ss in np.random.SeedSequence(seed).spawn(3)]


def _min_pairwise_sad(s: np.ndarray) -> float:
    n = s / np.linalg.norm(s, axis=0)
    cos = [n[:, i] @ n[:, j] for i, j in combinations(range(s.shape[1]), 2)]
    return float(np.degrees(np.arccos(np.clip(max(cos), -1.0, 1.0))))


def gen_basis(spec: DatasetSpec, rng: np.random.Generator | None = None, max_tries: int = 100) -> np.ndarray:
    """Columns are sums of Gaussian bumps on the grid ``0..L-1``, scaled to unit max.

    Whole bases whose closest pair of columns is within ``min_sad_deg`` are redrawn.
    """
    rng = _streams(spec.seed)[0] if rng is None else rng
    grid = np.arange(spec.l, dtype=float)
    lo, hi = spec.gaussians_per_basis
    for _ in range(max_tries):
        s = np.zeros((spec.l, spec.k))
        for j in range(spec.k):
            m = rng.integers(lo, hi + 1)
            amp = rng.uniform(*spec.amplitude_range, size=m)
            mu = rng.uniform(0.0, spec.l, size=m)
            sd = rng.uniform(spec.l / 100.0, spec.l / 10.0, size=m)
            s[:, j] = (amp[:, None] * np.exp(-0.5 * ((grid[None, :] - mu[:, None]) / sd[:, None]) ** 2)).sum(axis=0)
        s /= s.max(axis=0)
        if _min_pairwise_sad(s) > spec.min_sad_deg:
            return s
    raise ContractError(f"could not draw a basis with pairwise angles above {spec.min_sad_deg} degrees")


def gen_coeffs(spec: DatasetSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Uniform draws on ``{c >= 0, sum c = 1, max c <= purity}`` by rejection.

    Proposals come from whichever of the two simplices containing the region is
    smaller: the standard one (flat Dirichlet) or, when ``purity < 2/K``, the
    inverted one ``purity - (K purity - 1) * Dirichlet(1)``.  Both are uniform,
    so the accepted draws are uniform on the truncated region.
    """
    rng = _streams(spec.seed)[1] if rng is None else rng
    k, p = spec.k, spec.purity
    spread = k * p - 1.0
    inverted = spread < 1.0

    def propose(n: int) -> tuple[np.ndarray, np.ndarray]:
        w = rng.dirichlet(np.ones(k), size=n)
        if inverted:
            c = p - spread * w
            return c, c.min(axis=1) >= 0.0
        return w, w.max(axis=1) <= p

    if p < 1.0:
        _, ok = propose(PROBE_DRAWS)
        if ok.mean() < MIN_ACCEPTANCE:
            raise InfeasiblePurityError(f"acceptance rate {ok.mean():.2e} below {MIN_ACCEPTANCE:g} for purity {p}")
    out = np.empty((0, k))
    while len(out) < spec.t:
        c, ok = propose(max(2 * (spec.t - len(out)), 64))
        out = np.vstack([out, c[ok]])
    return out[: spec.t].T


def noise_sigma(y_clean: np.ndarray, snr_db: float) -> float:
    return float(np.sqrt(np.sum(y_clean**2) / (y_clean.size * 10.0 ** (snr_db / 10.0))))


def add_noise(y_clean, snr_db: float, seed: int | np.random.Generator) -> np.ndarray:
    """Additive white Gaussian noise; ``snr_db = inf`` disables it."""
    y = np.asarray(y_clean, dtype=float)
    if not np.any(y):
        raise ContractError("cannot set an SNR relative to an all-zero signal")
    if np.isinf(snr_db) and snr_db > 0:
        return y.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.Philox(seed))
    return y + rng.normal(0.0, noise_sigma(y, snr_db), size=y.shape)


def realized_snr_db(y_clean: np.ndarray, y_noisy: np.ndarray) -> float:
    return float(10.0 * np.log10(np.sum(y_clean**2) / np.sum((y_noisy - y_clean) ** 2)))


def generate(spec: DatasetSpec) -> Dataset:
    rb, rc, rn = _streams(spec.seed)
    s = gen_basis(spec, rb)
    c = gen_coeffs(spec, rc)
    y = s @ c
    return Dataset(s, c, y, add_noise(y, spec.snr_db, rn), spec)
