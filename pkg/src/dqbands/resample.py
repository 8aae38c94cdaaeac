"""Exchangeable bootstrap: random observation weights and joint DF draws.

Each draw ``b`` gets its own Philox stream keyed by ``(master_seed, b)``, so
a draw's weights depend neither on which other draws were computed nor on
the number of workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .shape import shape

SCHEMES = ("multinomial", "exponential")


@dataclass(frozen=True)
class BootstrapConfig:
    """Settings for the exchangeable bootstrap.

    Parameters
    ----------
    scheme : {"exponential", "multinomial"}
        Standard exponential weights (Bayesian bootstrap) or multinomial
        counts (empirical bootstrap).
    draws : int
        Number of bootstrap draws ``B``.
    master_seed : int
        Seed from which every per-draw stream is derived.
    cluster_by : str, optional
        Name of the clustering column; bookkeeping only, the labels
        themselves are passed to :func:`draw_weights`.
    cluster_level : bool
        Under clustering, toss multinomial counts over clusters (True) or
        over units (False). Exponential weights are always shared within a
        cluster.
    """

    scheme: str = "exponential"
    draws: int = 1000
    master_seed: int = 0
    cluster_by: Optional[str] = None
    cluster_level: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown bootstrap scheme {self.scheme!r}")
        if int(self.draws) < 2:
            raise ValueError("need at least 2 bootstrap draws")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")


def draw_rng(master_seed: int, b: int) -> np.random.Generator:
    """Counter-based generator for draw ``b``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(b),))
    return np.random.Generator(np.random.Philox(ss))


def _cluster_index(clusters, n):
    if clusters is None:
        return None, n
    labels = np.asarray(clusters)
    if labels.shape != (n,):
        raise ValueError("need one cluster label per row")
    _, inv = np.unique(labels, return_inverse=True)
    return inv, int(inv.max()) + 1


def draw_weights(config: BootstrapConfig, n: int, clusters=None,
                 b: int = 0) -> np.ndarray:
    """Weight vector for bootstrap draw ``b``.

    Without clusters every row is its own unit. With clusters, weights are
    drawn per cluster and copied to its rows, except for multinomial
    tosses with ``cluster_level=False``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = draw_rng(config.master_seed, b)
    inv, g = _cluster_index(clusters, n)
    if config.scheme == "multinomial":
        if inv is None or not config.cluster_level:
            return rng.multinomial(n, np.full(n, 1.0 / n)).astype(float)
        counts = rng.multinomial(g, np.full(g, 1.0 / g)).astype(float)
        return counts[inv]
    w = rng.standard_exponential(g)
    return w if inv is None else w[inv]


def weight_matrix(config: BootstrapConfig, n: int, clusters=None,
                  draws: Optional[Sequence[int]] = None) -> np.ndarray:
    """Stack of :func:`draw_weights` rows, one per draw index."""
    idx = range(config.draws) if draws is None else draws
    return np.stack([draw_weights(config, n, clusters, b) for b in idx])


class EstimatorError(RuntimeError):
    """An estimator failed on a particular bootstrap draw."""

    def __init__(self, draw: int, cause: Exception):
        super().__init__(f"estimator failed on bootstrap draw {draw}: {cause}")
        self.draw = draw
        self.cause = cause


@dataclass(frozen=True, eq=False)
class BootstrapDraws:
    """``values[b, k, t]``: shaped DF estimate k at grid point t, draw b."""

    values: np.ndarray
    config: BootstrapConfig
    degenerate: np.ndarray

    @property
    def shape(self):
        return self.values.shape


def bootstrap_dfs(estimator: Callable[[np.ndarray], np.ndarray], n: int,
                  config: BootstrapConfig, clusters=None, n_jobs: int = 1,
                  vectorized: bool = False, iso_weight: float = 0.0
                  ) -> BootstrapDraws:
    """Joint bootstrap draws of K DF estimators.

    Parameters
    ----------
    estimator : callable
        Maps a length-n weight vector to a ``(K, T)`` array of DF estimates.
        With ``vectorized=True`` it instead receives the full ``(B, n)``
        weight matrix and must return ``(B, K, T)``.
    n : int
        Number of data rows.
    config : BootstrapConfig
    clusters : array_like, optional
        Cluster label per row.
    n_jobs : int
        Worker threads for the per-draw loop. The result does not depend
        on this value.
    vectorized : bool
        Hand the whole weight matrix to the estimator in one call.
    iso_weight : float
        Shaping mix passed to :func:`dqbands.shape.shape`.

    Returns
    -------
    BootstrapDraws
        Every ``(b, k, :)`` slice is shaped. ``degenerate[k, t]`` marks grid
        points whose draws are all identical.
    """
    B = int(config.draws)
    if vectorized:
        W = weight_matrix(config, n, clusters)
        try:
            raw = np.asarray(estimator(W), dtype=float)
        except Exception as exc:  # noqa: BLE001 - reraised with context
            raise EstimatorError(-1, exc) from exc
        if raw.ndim != 3 or raw.shape[0] != B:
            raise ValueError("vectorized estimator must return (B, K, T)")
        values = shape(raw, iso_weight)
    else:
        def one(b):
            w = draw_weights(config, n, clusters, b)
            try:
                out = np.asarray(estimator(w), dtype=float)
            except Exception as exc:  # noqa: BLE001
                raise EstimatorError(b, exc) from exc
            if out.ndim == 1:
                out = out[None, :]
            return shape(out, iso_weight)

        if n_jobs > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                slices = list(pool.map(one, range(B)))
        else:
            slices = [one(b) for b in range(B)]
        values = np.stack(slices)
    values.setflags(write=False)
    degenerate = np.all(values == values[:1], axis=0)
    return BootstrapDraws(values=values, config=config, degenerate=degenerate)
