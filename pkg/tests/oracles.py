"""Reference implementations used only by the tests.

Each oracle takes a different computational route from the package code it
checks: explicit loops, closed-form formulas, or exhaustive enumeration.
"""

import itertools
import math

import numpy as np


def left_inverse_scan(points, values, domain_sup, a):
    """``inf{y : G(y) >= a}`` by scanning the grid left to right."""
    for y, g in zip(points, values):
        if g >= a:
            return float(y)
    return float(domain_sup)


def isotonic_minmax(y):
    """Least-squares isotonic fit via the min-max formula.

    ``m_i = max_{j <= i} min_{k >= i} mean(y[j..k])``.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    out = np.empty(n)
    for i in range(n):
        best = -math.inf
        for j in range(i + 1):
            worst = math.inf
            for k in range(i, n):
                worst = min(worst, y[j:k + 1].mean())
            best = max(best, worst)
        out[i] = best
    return out


def isotonic_lattice(y, step=0.05):
    """Brute-force least squares over nondecreasing vectors on a lattice."""
    y = np.asarray(y, dtype=float)
    lattice = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    best, best_v = math.inf, None
    for combo in itertools.combinations_with_replacement(lattice, y.size):
        v = np.array(combo)
        loss = float(np.sum((v - y) ** 2))
        if loss < best - 1e-15:
            best, best_v = loss, v
    return best_v


def poisson_cdf_recurrence(lam, y):
    """Plain float64 pmf recurrence ``p_j = p_{j-1} lam / j``, summed."""
    if y < 0:
        return 0.0
    p = math.exp(-lam)
    total = p
    for j in range(1, int(math.floor(y)) + 1):
        p *= lam / j
        total += p
    return min(total, 1.0)


def order_statistic(samples, alpha):
    """``ceil(alpha * B)``-th smallest value, by full sort."""
    s = sorted(float(v) for v in samples)
    k = math.ceil(alpha * len(s) - 1e-9)
    return s[min(max(k, 1), len(s)) - 1]


def critical_value_loop(draws, estimates, se, p):
    """Hand-unrolled max-t critical value over draws, functions and points."""
    B, K, T = draws.shape
    maxima = []
    for b in range(B):
        m = 0.0
        for k in range(K):
            for t in range(T):
                if se[k, t] > 0:
                    m = max(m, abs(draws[b, k, t] - estimates[k, t]) / se[k, t])
        maxima.append(m)
    return order_statistic(maxima, p)


def pairwise_differences(vs, us):
    """Every ``v - u`` by enumeration, as a sorted tuple of unique values."""
    return tuple(sorted({float(v) - float(u) for v in vs for u in us}))


def cell_edf(y, cells, grid):
    """Empirical DF of ``y`` within each distinct row of ``cells``."""
    out = {}
    for key in {tuple(r) for r in np.atleast_2d(cells)}:
        mask = np.all(cells == np.array(key), axis=1)
        out[key] = np.array([np.mean(y[mask] <= t) for t in grid])
    return out
