"""Monotonicity and range restrictions for DF estimates and band edges.

All operators act on the last axis of an array, so a stack of bootstrap
curves can be shaped in one call.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from .core import Grid, MonotoneStepFn


def clip_unit(f) -> np.ndarray:
    """Pointwise ``max(0, min(f, 1))``."""
    return np.clip(np.asarray(f, dtype=float), 0.0, 1.0)


def rearrange(f) -> np.ndarray:
    """Sort values into nondecreasing order along the grid.

    The k-th smallest value is assigned to the k-th smallest grid point.
    """
    return np.sort(np.asarray(f, dtype=float), axis=-1, kind="stable")


def _pava(y: np.ndarray) -> np.ndarray:
    # Blocks are kept as (sum, count) stacks; a new value is merged backwards
    # while it violates the ordering with the previous block mean.
    sums = np.empty(y.size)
    counts = np.empty(y.size, dtype=np.int64)
    top = -1
    for v in y:
        top += 1
        sums[top], counts[top] = v, 1
        while top > 0 and (sums[top - 1] * counts[top]
                           > sums[top] * counts[top - 1]):
            sums[top - 1] += sums[top]
            counts[top - 1] += counts[top]
            top -= 1
    return np.repeat(sums[:top + 1] / counts[:top + 1], counts[:top + 1])


def isotonize(f) -> np.ndarray:
    """Least-squares projection onto nondecreasing sequences (PAVA)."""
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 1:
        return _pava(arr)
    flat = arr.reshape(-1, arr.shape[-1])
    return np.stack([_pava(row) for row in flat]).reshape(arr.shape)


def shape(f, iso_weight: float = 0.0) -> np.ndarray:
    """Clip to [0, 1], then monotonize.

    Parameters
    ----------
    f : array_like
        Raw grid function(s); the last axis runs along the grid.
    iso_weight : float, default 0
        Weight on isotonization in the convex combination
        ``(1 - w) * rearrange + w * isotonize``. 0 is pure rearrangement,
        1 pure isotonization.
    """
    if not 0.0 <= iso_weight <= 1.0:
        raise ValueError("iso_weight must lie in [0, 1]")
    g = clip_unit(f)
    if iso_weight == 0.0:
        return rearrange(g)
    if iso_weight == 1.0:
        return np.clip(isotonize(g), 0.0, 1.0)
    out = (1.0 - iso_weight) * rearrange(g) + iso_weight * isotonize(g)
    return np.clip(out, 0.0, 1.0)


def shape_fn(grid: Grid, f, iso_weight: float = 0.0) -> MonotoneStepFn:
    """:func:`shape` wrapped into a :class:`MonotoneStepFn`."""
    return MonotoneStepFn(grid, shape(f, iso_weight))


def intersect_monotone(lower, upper) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Tightest monotone band inside ``[lower, upper]``.

    The upper edge becomes the greatest nondecreasing minorant of the clipped
    upper edge (running minimum from the right), the lower edge the smallest
    nondecreasing majorant of the clipped lower edge (running maximum from
    the left). Returns ``None`` when no nondecreasing function fits between
    them.
    """
    lo = clip_unit(lower)
    up = clip_unit(upper)
    up_i = np.minimum.accumulate(up[..., ::-1], axis=-1)[..., ::-1]
    lo_i = np.maximum.accumulate(lo, axis=-1)
    if np.any(lo_i > up_i):
        return None
    return lo_i, up_i
