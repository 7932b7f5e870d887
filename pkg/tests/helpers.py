"""Shared dataset builders for the tests."""
from __future__ import annotations

import numpy as np

from ossmf.datagen import Dataset, DatasetSpec, generate


def random_simplex(rng: np.random.Generator, k: int, spread: float = 0.3) -> np.ndarray:
    """Vertex columns of a well-conditioned simplex on the hyperplane ``1^T y = 1``."""
    while True:
        s = np.eye(k) + spread * rng.normal(size=(k, k))
        s /= s.sum(axis=0)
        if np.linalg.cond(s) < 50:
            return s


def points_in_simplex(rng: np.random.Generator, s: np.ndarray, n: int, purity: float = 1.0) -> np.ndarray:
    """Rows ``S c`` for uniform ``c`` with max entry at most ``purity``."""
    k = s.shape[1]
    c = rng.dirichlet(np.ones(k), size=8 * n)
    c = c[c.max(axis=1) <= purity][:n]
    return c @ s.T


def facet_supported(seed: int = 0, per_facet: int = 5, purity: float = 0.9, l: int = 50, t: int = 500) -> Dataset:
    """Noiseless K = 3 stream with ``per_facet`` observations exactly on each facet.

    On facet ``f`` the other two coefficients are ``a`` and ``1 - a`` with ``a``
    stratified over ``[1 - purity, purity]``; the facet points replace columns
    at random stream positions.
    """
    spec = DatasetSpec(l=l, t=t, k=3, purity=purity, snr_db=np.inf, seed=seed)
    ds = generate(spec)
    rng = np.random.default_rng(seed)
    c = ds.c_true.copy()
    cols = rng.choice(t, size=3 * per_facet, replace=False).reshape(3, per_facet)
    lo, width = 1.0 - purity, 2.0 * purity - 1.0
    for f in range(3):
        others = [i for i in range(3) if i != f]
        for n, col in enumerate(cols[f]):
            a = lo + width * (n + rng.uniform()) / per_facet
            c[:, col] = 0.0
            c[others, col] = (a, 1.0 - a)
    y = ds.s_true @ c
    return Dataset(ds.s_true, c, y, y.copy(), spec)
