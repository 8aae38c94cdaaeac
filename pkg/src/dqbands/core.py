"""Grids, monotone step functions, bands, and left/right inverses.

Every distribution-type object here lives on a finite, strictly increasing
grid of outcome values and is extended to the rest of the outcome domain by
right-continuous constant interpolation. Quantile-type objects are indexed by
a strictly increasing grid of probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

DEFAULT_PROB_GRID = np.arange(1, 100) / 100.0


class IncompatibleGridError(ValueError):
    """Raised when two objects that must share a grid do not."""


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    """Finite ordered set of outcome values.

    Parameters
    ----------
    points : array_like
        Strictly increasing outcome values.
    domain_sup : float, optional
        Upper end of the outcome domain. Defaults to the largest grid point.
        Pass ``np.inf`` (or any larger value) for an unbounded outcome; the
        left-inverse falls back to this value when a probability level is
        never reached on the grid.
    """

    points: np.ndarray
    domain_sup: Optional[float] = None

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("grid must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        sup = pts[-1] if self.domain_sup is None else float(self.domain_sup)
        if sup < pts[-1]:
            raise ValueError("domain_sup lies below the largest grid point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "domain_sup", float(sup))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return (self.domain_sup == other.domain_sup
                and self.points.shape == other.points.shape
                and bool(np.all(self.points == other.points)))

    def __hash__(self):
        return hash((self.points.tobytes(), self.domain_sup))


@dataclass(frozen=True, eq=False)
class MonotoneStepFn:
    """Nondecreasing [0, 1]-valued function on a grid.

    Between grid points the function is constant (right-continuous steps);
    below the first grid point it is 0.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (len(self.grid),):
            raise ValueError(
                f"expected {len(self.grid)} values, got shape {vals.shape}")
        if np.any(vals < 0) or np.any(vals > 1) or np.any(np.isnan(vals)):
            raise ValueError("values must lie in [0, 1]")
        if np.any(np.diff(vals) < 0):
            raise ValueError("values must be nondecreasing along the grid")
        object.__setattr__(self, "values", vals)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(self.grid.points, y, side="right") - 1
        out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], 0.0)
        return out if out.ndim else float(out)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MonotoneStepFn):
            return NotImplemented
        return self.grid == other.grid and bool(
            np.all(self.values == other.values))

    __hash__ = None

    @property
    def sup(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True, eq=False)
class DFBand:
    """Pair of monotone step functions with ``lower <= upper`` pointwise."""

    lower: MonotoneStepFn
    upper: MonotoneStepFn
    level: float

    def __post_init__(self):
        if self.lower.grid != self.upper.grid:
            raise IncompatibleGridError("band edges live on different grids")
        if np.any(self.lower.values > self.upper.values):
            raise ValueError("lower edge exceeds upper edge")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")

    @property
    def grid(self) -> Grid:
        return self.lower.grid

    def width(self) -> float:
        """Sup-norm width of the band."""
        return float(np.max(self.upper.values - self.lower.values))


@dataclass(frozen=True, eq=False)
class ProbGrid:
    """Strictly increasing probability indices in (0, 1)."""

    indices: np.ndarray

    def __post_init__(self):
        idx = _frozen(self.indices)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("probability grid must be a nonempty 1-d sequence")
        if np.any(idx <= 0) or np.any(idx >= 1):
            raise ValueError("probability indices must lie in (0, 1)")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("probability indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return self.indices.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbGrid):
            return NotImplemented
        return self.indices.shape == other.indices.shape and bool(
            np.all(self.indices == other.indices))

    __hash__ = None

    @classmethod
    def default(cls) -> "ProbGrid":
        return cls(DEFAULT_PROB_GRID)


def _check_admissible(admissible, lo, hi):
    if admissible is None:
        return None
    if len(admissible) != lo.size:
        raise ValueError("one admissible set per probability index required")
    sets = []
    for a_set, l, h in zip(admissible, lo, hi):
        s = _frozen(np.unique(np.asarray(a_set, dtype=float)))
        if s.size and (s[0] < l or s[-1] > h):
            raise ValueError("admissible set escapes its interval")
        sets.append(s)
    return tuple(sets)


@dataclass(frozen=True, eq=False)
class QuantileBand:
    """Band for a quantile function: one interval per probability index.

    ``admissible`` optionally restricts each interval to a finite set of
    outcome values (a support restriction); an empty set is legal.
    """

    prob_grid: ProbGrid
    lo: np.ndarray
    hi: np.ndarray
    admissible: Optional[tuple] = None

    def __post_init__(self):
        lo, hi = _frozen(self.lo), _frozen(self.hi)
        if lo.shape != (len(self.prob_grid),) or hi.shape != lo.shape:
            raise ValueError("interval arrays must match the probability grid")
        if np.any(lo > hi):
            raise ValueError("lo exceeds hi")
        # neighbour comparison stays valid when edges reach the domain supremum
        if np.any(lo[1:] < lo[:-1]) or np.any(hi[1:] < hi[:-1]):
            raise ValueError("quantile band edges must be nondecreasing")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "admissible",
                           _check_admissible(self.admissible, lo, hi))

    @property
    def empty(self) -> np.ndarray:
        """Indices whose admissible set is empty (all False without sets)."""
        if self.admissible is None:
            return np.zeros(len(self.prob_grid), dtype=bool)
        return np.array([s.size == 0 for s in self.admissible])


@dataclass(frozen=True, eq=False)
class QEBand:
    """Band for a quantile-effect (or ratio) function."""

    prob_grid: ProbGrid
    lo: np.ndarray
    hi: np.ndarray
    admissible: Optional[tuple] = None
    kind: str = "difference"

    def __post_init__(self):
        lo, hi = _frozen(self.lo), _frozen(self.hi)
        if lo.shape != (len(self.prob_grid),) or hi.shape != lo.shape:
            raise ValueError("interval arrays must match the probability grid")
        if np.any(lo > hi):
            raise ValueError("lo exceeds hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "admissible",
                           _check_admissible(self.admissible, lo, hi))

    def width(self) -> np.ndarray:
        return self.hi - self.lo


def left_inverse(G: MonotoneStepFn, a):
    """Left-inverse ``inf{y in grid : G(y) >= a}``.

    Falls back to ``G.grid.domain_sup`` when ``a`` exceeds ``sup G``.
    Vectorized over ``a``.
    """
    a = np.asarray(a, dtype=float)
    if np.any((a < 0) | (a > 1)):
        raise ValueError("probability levels must lie in [0, 1]")
    idx = np.searchsorted(G.values, a, side="left")
    pts = G.grid.points
    out = np.where(idx < pts.size, pts[np.minimum(idx, pts.size - 1)],
                   G.grid.domain_sup)
    return out if out.ndim else float(out)


def right_inverse(G: MonotoneStepFn, y) -> float:
    """``sup{a in [0,1] : left_inverse(G, a) <= y}`` (0 for an empty set).

    Computed by scanning the finitely many levels at which the left-inverse
    can change, so it only relies on :func:`left_inverse`.
    """
    levels = np.unique(np.concatenate([[0.0, 1.0], G.values]))
    ok = levels[left_inverse(G, levels) <= y]
    return float(ok.max()) if ok.size else 0.0


def covers(band: DFBand, F: MonotoneStepFn) -> bool:
    """True iff ``band.lower <= F <= band.upper`` at every grid point."""
    if band.grid != F.grid:
        raise IncompatibleGridError("band and function live on different grids")
    return bool(np.all(band.lower.values <= F.values)
                and np.all(F.values <= band.upper.values))


def breakpoint_probs(fns: Sequence[MonotoneStepFn], lo: float = 0.0,
                     hi: float = 1.0) -> np.ndarray:
    """Probability levels that resolve every left-inverse on ``[lo, hi]``.

    A left-inverse of a step function is constant on each interval
    ``(G(t_{k-1}), G(t_k)]``; evaluating at all jump levels inside the range,
    one interior point of every gap, and both range ends visits every value
    the left-inverses take on ``[lo, hi]``.
    """
    levels = [np.asarray(f.values, dtype=float) for f in fns]
    pts = np.unique(np.concatenate(levels + [np.array([lo, hi])]))
    pts = pts[(pts >= lo) & (pts <= hi)]
    mids = (pts[:-1] + pts[1:]) / 2.0
    return np.unique(np.concatenate([pts, mids]))
