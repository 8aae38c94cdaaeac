"""DF estimators: empirical DF, distribution regression, Poisson regression,
and counterfactual distributions built from them.

Every estimator returns grid values that are nondecreasing and lie in
[0, 1]; distribution-regression predictions are shaped before they leave
this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from .core import Grid, MonotoneStepFn
from .shape import shape

LINK_KINDS = ("logit", "probit", "linear", "gamma-incomplete")
INDEX_CAP = 30.0
MAX_ITER = 100
GRAD_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """Newton iterations ran out before the score vanished."""

    def __init__(self, message: str, coef: np.ndarray, grad_norm: float):
        super().__init__(f"{message} (gradient sup-norm {grad_norm:.3g})")
        self.coef = coef
        self.grad_norm = grad_norm


class DegenerateThreshold(Exception):
    """All indicators at a threshold are equal; ``value`` is 0 or 1."""

    def __init__(self, value: int):
        super().__init__(f"all indicators equal {value}")
        self.value = value


# -- data --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome, covariates, group and cluster labels, and row weights.

    Parameters
    ----------
    outcome : array_like, shape (n,)
    covariates : array_like, shape (n, p), optional
        May have zero columns.
    group : array_like, shape (n,), optional
        Group label per row; defaults to a single group ``"all"``.
    cluster : array_like, shape (n,), optional
    weights : array_like, shape (n,), optional
        Nonnegative; default all ones.
    covariate_names : sequence of str, optional
        Column names; defaults to ``x0, x1, ...``.
    """

    outcome: np.ndarray
    covariates: Optional[np.ndarray] = None
    group: Optional[np.ndarray] = None
    cluster: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    covariate_names: Tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.outcome, dtype=float)
        if y.ndim != 1 or y.size == 0:
            raise ValueError("outcome must be a nonempty vector")
        n = y.size
        X = (np.zeros((n, 0)) if self.covariates is None
             else np.asarray(self.covariates, dtype=float))
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != n:
            raise ValueError("covariates and outcome differ in length")
        g = (np.full(n, "all", dtype=object) if self.group is None
             else np.asarray(self.group, dtype=object))
        if g.shape != (n,):
            raise ValueError("need one group label per row")
        c = None if self.cluster is None else np.asarray(self.cluster, dtype=object)
        if c is not None and c.shape != (n,):
            raise ValueError("need one cluster label per row")
        w = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (n,):
            raise ValueError("need one weight per row")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        for lab in np.unique(g.astype(str)):
            if w[g.astype(str) == lab].sum() <= 0:
                raise ValueError(f"group {lab!r} has zero total weight")
        names = tuple(self.covariate_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError("one name per covariate column required")
        for attr, val in (("outcome", y), ("covariates", X), ("group", g),
                          ("cluster", c), ("weights", w),
                          ("covariate_names", names)):
            object.__setattr__(self, attr, val)

    @property
    def n(self) -> int:
        return self.outcome.size

    @property
    def groups(self) -> List[str]:
        """Group labels in order of first appearance."""
        labels = self.group.astype(str)
        _, first = np.unique(labels, return_index=True)
        return [labels[i] for i in sorted(first)]

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(self.outcome[mask], self.covariates[mask],
                       self.group[mask],
                       None if self.cluster is None else self.cluster[mask],
                       self.weights[mask], self.covariate_names)

    def for_group(self, label) -> "Dataset":
        mask = self.group.astype(str) == str(label)
        if not mask.any():
            raise ValueError(f"no rows in group {label!r}")
        return self.subset(mask)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.covariates[:, self.covariate_names.index(name)]
        except ValueError:
            raise KeyError(f"no covariate named {name!r}") from None


# -- links -------------------------------------------------------------------

@dataclass(frozen=True)
class LinkFunction:
    """Binary-response link ``Lambda_y``.

    ``kind="gamma-incomplete"`` needs ``threshold``; it maps an index ``u`` to
    the Poisson probability ``P(Y <= threshold)`` at rate ``exp(u)``, which
    decreases in ``u``.
    """

    kind: str
    threshold: Optional[float] = None

    def __post_init__(self):
        if self.kind not in LINK_KINDS:
            raise ValueError(f"unknown link {self.kind!r}")
        if self.kind == "gamma-incomplete" and self.threshold is None:
            raise ValueError("gamma-incomplete link needs a threshold")

    @property
    def _k(self) -> float:
        return float(np.floor(self.threshold))

    def cdf(self, u) -> np.ndarray:
        """Probability ``Lambda(u)``."""
        u = np.asarray(u, dtype=float)
        if self.kind == "logit":
            return special.expit(u)
        if self.kind == "probit":
            return special.ndtr(u)
        if self.kind == "linear":
            return np.clip(u, 0.0, 1.0)
        if self._k < 0:
            return np.zeros_like(u)
        return special.gammaincc(self._k + 1.0, np.exp(u))

    def sf(self, u) -> np.ndarray:
        """``1 - Lambda(u)`` computed without cancellation."""
        u = np.asarray(u, dtype=float)
        if self.kind == "logit":
            return special.expit(-u)
        if self.kind == "probit":
            return special.ndtr(-u)
        if self.kind == "linear":
            return 1.0 - np.clip(u, 0.0, 1.0)
        if self._k < 0:
            return np.ones_like(u)
        return special.gammainc(self._k + 1.0, np.exp(u))

    def pdf(self, u) -> np.ndarray:
        """Derivative ``dLambda/du`` (negative for the gamma link)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "logit":
            return special.expit(u) * special.expit(-u)
        if self.kind == "probit":
            return np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)
        if self.kind == "linear":
            return np.ones_like(u)
        if self._k < 0:
            return np.zeros_like(u)
        k = self._k
        return -np.exp((k + 1.0) * u - np.exp(u) - special.gammaln(k + 1.0))

    def inverse(self, prob: float) -> float:
        """Index ``u`` with ``Lambda(u) = prob`` (intercept-only start)."""
        prob = float(np.clip(prob, 1e-12, 1 - 1e-12))
        if self.kind == "logit":
            return float(special.logit(prob))
        if self.kind == "probit":
            return float(special.ndtri(prob))
        if self.kind == "linear":
            return prob
        lam = special.gammainccinv(self._k + 1.0, prob)
        return float(np.log(max(lam, 1e-300)))


# -- covariate basis ----------------------------------------------------------

@dataclass(frozen=True)
class DesignSpec:
    """Declared transformation ``B(x)`` of the covariates.

    Parameters
    ----------
    columns : sequence of str
        Covariates entering the model. Empty means intercept only.
    categorical : sequence of str
        Columns expanded into indicators (first observed level dropped).
    interactions : sequence of (str, str)
        Products of the two columns' basis blocks.
    saturated : bool
        One indicator per observed cell of ``columns``, which overrides the
        other options.
    intercept : bool
    """

    columns: Tuple[str, ...] = ()
    categorical: Tuple[str, ...] = ()
    interactions: Tuple[Tuple[str, str], ...] = ()
    saturated: bool = False
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "categorical", tuple(self.categorical))
        object.__setattr__(self, "interactions",
                           tuple(tuple(p) for p in self.interactions))
        for name in self.categorical + tuple(c for p in self.interactions for c in p):
            if name not in self.columns:
                raise ValueError(f"{name!r} is not a declared column")

    def build(self, data: Dataset) -> "Basis":
        """Freeze levels and cells observed in ``data``."""
        cols = [data.column(c) for c in self.columns]
        levels = {c: np.unique(data.column(c)) for c in self.categorical}
        cells = None
        if self.saturated and self.columns:
            cells = np.unique(np.column_stack(cols), axis=0)
        return Basis(self, levels, cells)


@dataclass(frozen=True, eq=False)
class Basis:
    """A :class:`DesignSpec` with levels frozen at fit time."""

    spec: DesignSpec
    levels: Dict[str, np.ndarray] = field(default_factory=dict)
    cells: Optional[np.ndarray] = None

    def _block(self, name: str, x: np.ndarray) -> np.ndarray:
        if name not in self.levels:
            return x[:, None]
        lev = self.levels[name]
        unseen = ~np.isin(x, lev)
        if unseen.any():
            raise ValueError(f"column {name!r} has levels unseen at fit time")
        return (x[:, None] == lev[None, 1:]).astype(float)

    def transform(self, X, names: Sequence[str]) -> np.ndarray:
        """Design matrix for covariate rows ``X`` with column ``names``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        names = list(names)
        m = X.shape[0]

        def col(c):
            try:
                return X[:, names.index(c)]
            except ValueError:
                raise KeyError(f"no covariate named {c!r}") from None

        parts = [np.ones((m, 1))] if self.spec.intercept else []
        if self.cells is not None:
            sub = np.column_stack([col(c) for c in self.spec.columns])
            match = np.all(sub[:, None, :] == self.cells[None, :, :], axis=2)
            if not np.all(match.any(axis=1)):
                raise ValueError("covariate cell unseen at fit time")
            start = 1 if self.spec.intercept else 0
            parts.append(match[:, start:].astype(float))
            return np.hstack(parts)
        blocks = {c: self._block(c, col(c)) for c in self.spec.columns}
        parts.extend(blocks[c] for c in self.spec.columns)
        for a, b in self.spec.interactions:
            A, B = blocks[a], blocks[b]
            parts.append((A[:, :, None] * B[:, None, :]).reshape(m, -1))
        return np.hstack(parts) if parts else np.zeros((m, 0))


# -- binary fits ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BinaryFit:
    coef: np.ndarray
    iterations: int
    grad_norm: float
    separated: bool


def _score_info(link: LinkFunction, X, d, w, beta):
    u = np.clip(X @ beta, -INDEX_CAP, INDEX_CAP)
    if link.kind == "logit":
        p = special.expit(u)
        r = d - p
        v = p * (1.0 - p)
        return X.T @ (w * r), (X * (w * v)[:, None]).T @ X, u
    F, S, f = link.cdf(u), link.sf(u), link.pdf(u)
    F = np.maximum(F, 1e-300)
    S = np.maximum(S, 1e-300)
    r = f * (d / F - (1.0 - d) / S)
    v = f * f / (F * S)
    return X.T @ (w * r), (X * (w * v)[:, None]).T @ X, u


def _loglik(link: LinkFunction, X, d, w, beta) -> float:
    u = np.clip(X @ beta, -INDEX_CAP, INDEX_CAP)
    F = np.maximum(link.cdf(u), 1e-300)
    S = np.maximum(link.sf(u), 1e-300)
    return float(np.sum(w * (d * np.log(F) + (1.0 - d) * np.log(S))))


def _intercept_start(link, X, d, w) -> np.ndarray:
    beta = np.zeros(X.shape[1])
    ones = np.flatnonzero(np.all(X == 1.0, axis=0))
    if ones.size:
        beta[ones[0]] = link.inverse(float(np.sum(w * d) / np.sum(w)))
    return beta


def fit_binary(indicator, X, weights=None, link: LinkFunction = LinkFunction("logit"),
               start=None) -> BinaryFit:
    """Weighted binary maximum likelihood for ``P(d = 1 | x) = Lambda(x'b)``.

    Fisher scoring with step halving, started at the intercept-only fit.
    The linear link is fitted by weighted least squares instead.

    Raises
    ------
    DegenerateThreshold
        If all positively weighted indicators are equal.
    ConvergenceError
        If the score sup-norm is still above ``1e-8`` after 100 iterations.
    """
    d = np.asarray(indicator, dtype=float)
    X = np.asarray(X, dtype=float)
    w = np.ones(d.size) if weights is None else np.asarray(weights, dtype=float)
    live = w > 0
    if not live.any():
        raise ValueError("all weights are zero")
    dl = d[live]
    if np.all(dl == dl[0]):
        raise DegenerateThreshold(int(dl[0]))
    X, d, w = X[live], dl, w[live]
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValueError("design is not of full column rank on the weighted support")

    if link.kind == "linear":
        sw = np.sqrt(w)
        coef = np.linalg.lstsq(X * sw[:, None], d * sw, rcond=None)[0]
        grad = X.T @ (w * (d - X @ coef))
        return BinaryFit(coef, 1, float(np.max(np.abs(grad))), False)

    beta = (_intercept_start(link, X, d, w) if start is None
            else np.asarray(start, dtype=float).copy())
    ll = _loglik(link, X, d, w, beta)
    grad, info, u = _score_info(link, X, d, w, beta)
    gnorm = float(np.max(np.abs(grad)))
    it = 0
    polished = False
    while True:
        if gnorm <= GRAD_TOL:
            if polished:
                break
            polished = True
        if it >= MAX_ITER:
            if gnorm <= GRAD_TOL:
                break
            raise ConvergenceError("binary fit did not converge", beta, gnorm)
        it += 1
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = _loglik(link, X, d, w, cand)
            if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        beta, ll = cand, ll_new
        grad, info, u = _score_info(link, X, d, w, beta)
        gnorm = float(np.max(np.abs(grad)))
        if np.max(np.abs(X @ beta)) >= INDEX_CAP:
            break
    separated = bool(np.max(np.abs(X @ beta)) >= INDEX_CAP)
    return BinaryFit(beta, it, gnorm, separated)


# -- distribution regression ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class DRFit:
    """Per-threshold distribution-regression coefficients.

    ``coefs[t]`` is ``nan`` where ``degenerate[t]`` is nonzero; ``degenerate``
    holds -1 for an all-zero indicator (DF fixed at 0) and +1 for an all-one
    indicator (DF fixed at 1).
    """

    grid: Grid
    coefs: np.ndarray
    link: str
    basis: Basis
    covariate_names: Tuple[str, ...]
    degenerate: np.ndarray
    separated: np.ndarray
    iso_weight: float = 0.0

    def link_at(self, t: int) -> LinkFunction:
        if self.link == "gamma-incomplete":
            return LinkFunction(self.link, float(self.grid.points[t]))
        return LinkFunction(self.link)


def dr_fit(data: Dataset, grid: Grid, link: str = "logit",
           design: DesignSpec = DesignSpec(), weights=None,
           pinned=None, iso_weight: float = 0.0,
           basis: Optional[Basis] = None) -> DRFit:
    """Fit one binary regression of ``1{Y <= y}`` per grid point ``y``.

    Parameters
    ----------
    data : Dataset
    grid : Grid
    link : {"logit", "probit", "linear", "gamma-incomplete"}
    design : DesignSpec
    weights : array_like, optional
        Row weights multiplying ``data.weights`` (bootstrap weights).
    pinned : array_like, optional
        Use this coefficient vector at every threshold instead of fitting.
    iso_weight : float
        Shaping mix applied by :func:`dr_predict`.
    basis : Basis, optional
        Prebuilt basis (levels frozen on a larger sample); overrides
        ``design``.
    """
    if link not in LINK_KINDS:
        raise ValueError(f"unknown link {link!r}")
    basis = design.build(data) if basis is None else basis
    X = basis.transform(data.covariates, data.covariate_names)
    w = data.weights if weights is None else data.weights * np.asarray(weights, float)
    T = len(grid)
    coefs = np.full((T, X.shape[1]), np.nan)
    degenerate = np.zeros(T, dtype=np.int8)
    separated = np.zeros(T, dtype=bool)
    if pinned is not None:
        pinned = np.asarray(pinned, dtype=float)
        if pinned.shape != (X.shape[1],):
            raise ValueError(f"pinned coefficients need length {X.shape[1]}")
        coefs[:] = pinned
    else:
        for t, y in enumerate(grid.points):
            lf = (LinkFunction(link, float(y)) if link == "gamma-incomplete"
                  else LinkFunction(link))
            try:
                bf = fit_binary(data.outcome <= y, X, w, lf)
            except DegenerateThreshold as exc:
                degenerate[t] = 1 if exc.value == 1 else -1
                continue
            coefs[t] = bf.coef
            separated[t] = bf.separated
    for arr in (coefs, degenerate, separated):
        arr.setflags(write=False)
    return DRFit(grid, coefs, link, basis, data.covariate_names, degenerate,
                 separated, iso_weight)


def dr_predict_raw(fit: DRFit, X) -> np.ndarray:
    """Unshaped predictions ``Lambda_y(B(x)'b(y))``, shape ``(m, T)``."""
    Z = fit.basis.transform(X, fit.covariate_names)
    out = np.empty((Z.shape[0], len(fit.grid)))
    for t in range(len(fit.grid)):
        if fit.degenerate[t]:
            out[:, t] = 1.0 if fit.degenerate[t] > 0 else 0.0
            continue
        u = Z @ fit.coefs[t]
        if fit.link != "gamma-incomplete":
            u = np.clip(u, -INDEX_CAP, INDEX_CAP)
        out[:, t] = fit.link_at(t).cdf(u)
    return out


def dr_predict_matrix(fit: DRFit, X) -> np.ndarray:
    """Shaped predictions for each covariate row, shape ``(m, T)``."""
    return shape(dr_predict_raw(fit, X), fit.iso_weight)


def dr_predict(fit: DRFit, x) -> MonotoneStepFn:
    """Shaped conditional DF at one covariate row ``x``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return MonotoneStepFn(fit.grid, dr_predict_matrix(fit, x)[0])


# -- Poisson regression --------------------------------------------------------

def _check_counts(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y != np.floor(y)) or not np.all(np.isfinite(y)):
        raise ValueError("Poisson outcomes must be nonnegative integers")
    return y


def poisson_fit(data: Dataset, design: DesignSpec = DesignSpec(),
                weights=None, basis: Optional[Basis] = None) -> np.ndarray:
    """Weighted Poisson maximum likelihood for ``E[Y|x] = exp(B(x)'b)``.

    Raises ``ValueError`` for outcomes that are not nonnegative integers.
    """
    y = _check_counts(data.outcome)
    basis = design.build(data) if basis is None else basis
    X = basis.transform(data.covariates, data.covariate_names)
    w = data.weights if weights is None else data.weights * np.asarray(weights, float)
    beta = np.zeros(X.shape[1])
    ones = np.flatnonzero(np.all(X == 1.0, axis=0))
    ybar = float(np.sum(w * y) / np.sum(w))
    if ones.size:
        beta[ones[0]] = np.log(max(ybar, 1e-12))

    def ll(b):
        eta = X @ b
        return float(np.sum(w * (y * eta - np.exp(eta))))

    cur = ll(beta)
    for _ in range(MAX_ITER):
        mu = np.exp(X @ beta)
        grad = X.T @ (w * (y - mu))
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gnorm <= GRAD_TOL:
            return beta
        step = np.linalg.solve((X * (w * mu)[:, None]).T @ X, grad)
        t = 1.0
        while ll(beta + t * step) < cur - 1e-12 * abs(cur) and t > 1e-10:
            t *= 0.5
        beta = beta + t * step
        cur = ll(beta)
    raise ConvergenceError("Poisson fit did not converge", beta, gnorm)


def poisson_cdf(lam, y):
    """``P(Y <= y)`` for ``Y ~ Poisson(lam)``; broadcasts over arguments.

    Sums pmf terms in log space for ``y <= 10 lam + 50``; beyond that the
    regularized upper incomplete gamma function is used.
    """
    lam_a, y_a = np.broadcast_arrays(np.asarray(lam, dtype=float),
                                     np.asarray(y, dtype=float))
    if np.any(lam_a < 0) or not np.all(np.isfinite(lam_a)):
        raise ValueError("rate must be finite and nonnegative")
    lam_f, y_f = lam_a.ravel(), y_a.ravel()
    out = np.zeros(lam_f.size)
    k = np.floor(y_f)
    pos = y_f >= 0
    out[pos & (lam_f == 0)] = 1.0
    live = pos & (lam_f > 0)
    summed = live & (k <= 10.0 * lam_f + 50.0)
    tail = live & ~summed
    out[tail] = special.gammaincc(k[tail] + 1.0, lam_f[tail])
    if summed.any():
        rates, inv = np.unique(lam_f[summed], return_inverse=True)
        kk = k[summed].astype(np.int64)
        j = np.arange(kk.max() + 1, dtype=float)
        logs = (-rates[:, None] + j[None, :] * np.log(rates)[:, None]
                - special.gammaln(j + 1.0)[None, :])
        cum = np.logaddexp.accumulate(logs, axis=1)
        out[summed] = np.minimum(1.0, np.exp(cum[inv.ravel(), kk]))
    out = out.reshape(lam_a.shape)
    return out if out.ndim else float(out)


def poisson_df_matrix(basis: Basis, names: Sequence[str], X, grid: Grid,
                      beta) -> np.ndarray:
    """Poisson conditional DFs on ``grid`` for each covariate row of ``X``."""
    lam = np.exp(basis.transform(X, names) @ np.asarray(beta, dtype=float))
    return poisson_cdf(lam[:, None], grid.points[None, :])


# -- empirical DF --------------------------------------------------------------

def edf_values(outcome, grid: Grid, weights=None) -> np.ndarray:
    """Weighted empirical DF on the grid; ``weights`` may be ``(B, n)``.

    Each row's weight is binned at the first grid point it does not exceed
    and the bins are cumulated along the grid. The summation order is the
    same for a single weight vector and for every row of a weight matrix,
    so batched and per-draw evaluations agree bit for bit.
    """
    y = np.asarray(outcome, dtype=float)
    if y.size == 0:
        raise ValueError("empty sample")
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    if w.shape[-1] != y.size:
        raise ValueError("need one weight per observation")
    T = grid.points.size
    idx = np.searchsorted(grid.points, y, side="left")
    rows = w.reshape(-1, y.size)
    flat = (idx[None, :] + (T + 1) * np.arange(rows.shape[0])[:, None]).ravel()
    bins = np.bincount(flat, weights=rows.ravel(), minlength=rows.shape[0] * (T + 1))
    cum = np.cumsum(bins.reshape(rows.shape[0], T + 1), axis=-1)
    tot = cum[:, -1:]
    if np.any(tot <= 0):
        raise ValueError("zero total weight")
    vals = np.clip(cum[:, :T] / tot, 0.0, 1.0)
    return vals.reshape(w.shape[:-1] + (T,))


def edf(outcome, grid: Grid, weights=None) -> MonotoneStepFn:
    """Weighted empirical DF ``sum w 1{Y <= y} / sum w`` on ``grid``."""
    vals = edf_values(outcome, grid, weights)
    return MonotoneStepFn(grid, np.maximum.accumulate(vals))


# -- counterfactuals -----------------------------------------------------------

def counterfactual(fit: DRFit, X, weights=None) -> MonotoneStepFn:
    """Average of shaped conditional DFs over covariate rows ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty covariate sample")
    preds = dr_predict_matrix(fit, X)
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        raise ValueError("zero total weight")
    vals = np.clip(w @ preds / w.sum(), 0.0, 1.0)
    return MonotoneStepFn(fit.grid, np.maximum.accumulate(vals))


def counterfactual_shift(fit: DRFit, X, column: str, delta: float,
                         weights=None) -> MonotoneStepFn:
    """:func:`counterfactual` after adding ``delta`` to covariate ``column``."""
    if column not in fit.covariate_names:
        raise KeyError(f"no covariate named {column!r}")
    X = np.array(np.atleast_2d(X), dtype=float)
    X[:, fit.covariate_names.index(column)] += delta
    return counterfactual(fit, X, weights)


def decomposition_triplet(data: Dataset, groups: Tuple[str, str], grid: Grid,
                          link: str = "logit",
                          design: DesignSpec = DesignSpec(),
                          weights=None) -> Tuple[MonotoneStepFn, ...]:
    """``(F_W, F_B, F_<W|B>)`` for reference group W and comparison group B.

    ``F_W`` and ``F_B`` are the groups' weighted empirical DFs; ``F_<W|B>``
    integrates the DR fit of W over B's covariate distribution.
    """
    g_w, g_b = groups
    labels = data.group.astype(str)
    mw, mb = labels == str(g_w), labels == str(g_b)
    if not mw.any() or not mb.any():
        raise ValueError("both groups need at least one row")
    w_all = data.weights if weights is None else data.weights * np.asarray(weights, float)
    dw, db = data.subset(mw), data.subset(mb)
    ww, wb = w_all[mw], w_all[mb]
    f_w = edf(dw.outcome, grid, ww)
    f_b = edf(db.outcome, grid, wb)
    fit = dr_fit(dw, grid, link, design, weights=weights if weights is None
                 else np.asarray(weights, float)[mw])
    f_wb = counterfactual(fit, db.covariates, wb)
    return f_w, f_b, f_wb
