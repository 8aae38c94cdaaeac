"""Bootstrap DF-bands and their inversion into quantile and QE-bands.

Conventions
-----------
* Empirical alpha-quantiles of B draws are the ``ceil(alpha * B)``-th order
  statistic, everywhere.
* Grid points whose robust standard error is zero are left out of the
  max-t statistic and get a zero-width preliminary interval at the point
  estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtri

from .core import (DFBand, Grid, MonotoneStepFn, ProbGrid, QEBand,
                   QuantileBand, left_inverse)
from .shape import intersect_monotone, shape

IQR_SCALE = float(ndtri(0.75) - ndtri(0.25))


class AllPointsExcludedError(ValueError):
    """Every (k, y) point has a zero robust standard error."""


class EmptyBandError(ValueError):
    """Intersection shaping produced an empty band."""


def order_stat_index(alpha: float, B: int) -> int:
    """0-based index of the ``ceil(alpha * B)``-th order statistic."""
    # the small offset keeps e.g. 0.95 * 500 from rounding up to 476
    k = math.ceil(alpha * B - 1e-9)
    return min(max(k, 1), B) - 1


def empirical_quantile(samples, alpha: float, axis: int = 0) -> np.ndarray:
    """``ceil(alpha * B)``-th order statistic along ``axis``."""
    s = np.sort(np.asarray(samples, dtype=float), axis=axis)
    k = order_stat_index(alpha, s.shape[axis])
    return np.take(s, k, axis=axis)


def robust_se(draws, axis: int = 0) -> np.ndarray:
    """Bootstrap interquartile range rescaled to a normal standard deviation."""
    draws = np.asarray(draws, dtype=float)
    if draws.shape[axis] < 2:
        raise ValueError("need at least 2 draws")
    s = np.sort(draws, axis=axis)
    B = s.shape[axis]
    q75 = np.take(s, order_stat_index(0.75, B), axis=axis)
    q25 = np.take(s, order_stat_index(0.25, B), axis=axis)
    return (q75 - q25) / IQR_SCALE


@dataclass(frozen=True, eq=False)
class CriticalValueReport:
    """Outcome of the max-t critical value computation."""

    c: float
    se: np.ndarray
    excluded: np.ndarray
    level: float
    B: int
    maxima: np.ndarray = field(repr=False)


def max_t_stats(draws, estimates, se) -> Tuple[np.ndarray, np.ndarray]:
    """Per-draw maximal studentized deviation and the excluded-point mask.

    ``draws`` is ``(B, K, T)`` (or ``(B, T)``), ``estimates`` and ``se``
    are ``(K, T)`` (or ``(T,)``).
    """
    draws = np.asarray(draws, dtype=float)
    est = np.asarray(estimates, dtype=float)
    se = np.asarray(se, dtype=float)
    excluded = ~(se > 0) | ~np.isfinite(se)
    if np.all(excluded):
        raise AllPointsExcludedError(
            "all grid points have zero robust standard error")
    safe = np.where(excluded, 1.0, se)
    t = np.abs(draws - est) / safe
    t = np.where(excluded, 0.0, t)
    return t.reshape(t.shape[0], -1).max(axis=1), excluded


def critical_value(draws, estimates, se, p: float) -> CriticalValueReport:
    """p-quantile over draws of the max-t statistic over all (k, y)."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    maxima, excluded = max_t_stats(draws, estimates, se)
    c = float(empirical_quantile(maxima, p))
    return CriticalValueReport(c=c, se=np.asarray(se, dtype=float),
                               excluded=excluded, level=p, B=maxima.size,
                               maxima=maxima)


@dataclass(frozen=True, eq=False)
class JointBands:
    """DF-bands for K functions plus the shaped point estimates."""

    bands: List[DFBand]
    estimates: List[MonotoneStepFn]
    report: CriticalValueReport
    prelim_lower: np.ndarray = field(repr=False)
    prelim_upper: np.ndarray = field(repr=False)


def df_bands_joint(estimates, draws, p: float, grid: Grid,
                   method: str = "rearrange",
                   iso_weight: float = 0.0) -> JointBands:
    """Simultaneous DF-bands for K functions from joint bootstrap draws.

    Parameters
    ----------
    estimates : array_like, shape (K, T)
        Point estimates on ``grid``.
    draws : array_like or BootstrapDraws, shape (B, K, T)
    p : float
        Joint coverage level.
    grid : Grid
    method : {"rearrange", "isotonize", "mix", "intersect"}
        Shaping of the preliminary band edges. "mix" uses ``iso_weight``.
        "intersect" takes the tightest monotone band inside the preliminary
        one and raises :class:`EmptyBandError` if there is none.
    """
    vals = getattr(draws, "values", draws)
    vals = np.asarray(vals, dtype=float)
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    if vals.ndim == 2:
        vals = vals[:, None, :]
    if vals.shape[1:] != est.shape or est.shape[1] != len(grid):
        raise ValueError("estimates and draws must share (K, T) on the grid")
    se = robust_se(vals, axis=0)
    rep = critical_value(vals, est, se, p)
    half = np.where(rep.excluded, 0.0, rep.c * se)
    lo_p, up_p = est - half, est + half

    w = {"rearrange": 0.0, "isotonize": 1.0, "mix": iso_weight}
    bands, shaped_est = [], []
    for k in range(est.shape[0]):
        if method == "intersect":
            res = intersect_monotone(lo_p[k], up_p[k])
            if res is None:
                raise EmptyBandError(f"empty intersection band for function {k}")
            lo_k, up_k = res
            f_k = shape(est[k])
        elif method in w:
            lo_k, up_k = shape(lo_p[k], w[method]), shape(up_p[k], w[method])
            f_k = shape(est[k], w[method])
        else:
            raise ValueError(f"unknown shaping method {method!r}")
        bands.append(DFBand(MonotoneStepFn(grid, lo_k),
                            MonotoneStepFn(grid, up_k), p))
        shaped_est.append(MonotoneStepFn(grid, f_k))
    return JointBands(bands, shaped_est, rep, lo_p, up_p)


def df_band_single(estimate, draws, p: float, grid: Grid,
                   method: str = "rearrange",
                   iso_weight: float = 0.0) -> JointBands:
    """DF-band for a single function (the K = 1 case)."""
    est = np.asarray(estimate, dtype=float)
    vals = np.asarray(getattr(draws, "values", draws), dtype=float)
    if vals.ndim == 3:
        if vals.shape[1] != 1:
            raise ValueError("single-function band needs draws for one function")
        vals = vals[:, 0, :]
    return df_bands_joint(est[None, :], vals[:, None, :], p, grid,
                          method, iso_weight)


def jump_augmented_grid(fns: Sequence[MonotoneStepFn],
                        prob_grid: ProbGrid) -> ProbGrid:
    """Add every distinct function value inside the grid's range."""
    base = prob_grid.indices
    vals = np.concatenate([np.asarray(f.values) for f in fns] + [base])
    vals = vals[(vals >= base[0]) & (vals <= base[-1])]
    return ProbGrid(np.unique(vals))


def invert_band(band: DFBand, prob_grid: Optional[ProbGrid] = None,
                augment: bool = True) -> QuantileBand:
    """Quantile band ``[U^-(a), L^-(a)]`` from a DF-band."""
    pg = ProbGrid.default() if prob_grid is None else prob_grid
    if augment:
        pg = jump_augmented_grid([band.lower, band.upper], pg)
    a = pg.indices
    return QuantileBand(pg, left_inverse(band.upper, a),
                        left_inverse(band.lower, a))


def restrict_support(qband: QuantileBand, support) -> QuantileBand:
    """Intersect each interval with a finite support set.

    Endpoints shrink to the smallest and largest admissible value when the
    intersection is nonempty and are kept otherwise; empty sets are kept
    and reported through ``QuantileBand.empty``.
    """
    sup = np.unique(np.asarray(support, dtype=float))
    if sup.size == 0:
        raise ValueError("support must be nonempty")
    lo, hi, adm = qband.lo.copy(), qband.hi.copy(), []
    for i, (l, h) in enumerate(zip(qband.lo, qband.hi)):
        s = sup[(sup >= l) & (sup <= h)]
        if qband.admissible is not None:
            s = np.intersect1d(s, qband.admissible[i])
        if s.size:
            lo[i], hi[i] = s[0], s[-1]
        adm.append(s)
    return QuantileBand(qband.prob_grid, lo, hi, tuple(adm))


def _require_common(pg1: ProbGrid, pg2: ProbGrid):
    if pg1 != pg2:
        raise ValueError("bands must share a probability grid")


def minkowski_interval(v1, v2, u1, u2):
    """``[v1, v2] - [u1, u2] = [v1 - u2, v2 - u1]``."""
    return np.subtract(v1, u2), np.subtract(v2, u1)


def minkowski_set(vs, us,
                  joint: Optional[Callable[[float, float], bool]] = None
                  ) -> np.ndarray:
    """All differences ``v - u``, optionally only for admissible pairs."""
    vs, us = np.asarray(vs, dtype=float), np.asarray(us, dtype=float)
    if joint is None:
        return np.unique(np.subtract.outer(vs, us).ravel())
    diffs = [v - u for v in vs for u in us if joint(v, u)]
    return np.unique(np.array(diffs, dtype=float))


def qe_band(qj: QuantileBand, qm: QuantileBand,
            joint_support: Optional[Callable[[float, float], bool]] = None
            ) -> QEBand:
    """Band for ``F_j^- - F_m^-`` by pointwise Minkowski difference.

    When both inputs carry admissible sets the result carries the set of
    pairwise differences, filtered by ``joint_support(t_j, t_m)`` if given.
    """
    _require_common(qj.prob_grid, qm.prob_grid)
    lo, hi = minkowski_interval(qj.lo, qj.hi, qm.lo, qm.hi)
    adm = None
    if qj.admissible is not None and qm.admissible is not None:
        adm = tuple(minkowski_set(v, u, joint_support)
                    for v, u in zip(qj.admissible, qm.admissible))
        # a joint-support filter may shrink the set below the interval ends
        lo = np.array([s[0] if s.size else l for s, l in zip(adm, lo)])
        hi = np.array([s[-1] if s.size else h for s, h in zip(adm, hi)])
    return QEBand(qj.prob_grid, lo, hi, adm, kind="difference")


def ratio_band(qj: QuantileBand, qm: QuantileBand) -> QEBand:
    """Band for ``F_j^- / F_m^-``: ``[lo_j / hi_m, hi_j / lo_m]``."""
    _require_common(qj.prob_grid, qm.prob_grid)
    bad = np.flatnonzero(~(qm.lo > 0))
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"denominator band not strictly positive at index {i} "
            f"(a={qm.prob_grid.indices[i]:g}, lower end {qm.lo[i]:g})")
    return QEBand(qj.prob_grid, qj.lo / qm.hi, qj.hi / qm.lo, kind="ratio")


@dataclass(frozen=True)
class EqualityTest:
    reject: bool
    indices: np.ndarray
    empty_admissible: np.ndarray


def test_equality(qe: QEBand, use_support: bool = True) -> EqualityTest:
    """Reject equality of two quantile functions if 0 leaves the band.

    Under a support restriction, a nonempty admissible set that misses 0
    is evidence against equality. An empty admissible set counts only if
    the interval itself excludes 0; such indices are reported separately.
    """
    excl = (qe.lo > 0) | (qe.hi < 0)
    empty = np.zeros_like(excl)
    if use_support and qe.admissible is not None:
        for i, s in enumerate(qe.admissible):
            if s.size == 0:
                empty[i] = True
            elif not np.any(s == 0):
                excl[i] = True
    idx = np.flatnonzero(excl)
    return EqualityTest(bool(idx.size), idx, np.flatnonzero(empty))


test_equality.__test__ = False  # keep pytest from collecting it


def quantile_band_covers(qband: QuantileBand, values,
                         use_support: bool = True) -> bool:
    """True iff ``values[i]`` lies in the band at every index ``i``."""
    v = np.asarray(values, dtype=float)
    ok = (qband.lo <= v) & (v <= qband.hi)
    if use_support and qband.admissible is not None:
        ok &= np.array([np.any(s == x) for s, x in zip(qband.admissible, v)])
    return bool(np.all(ok))
