"""Monte Carlo coverage, power, and band-length studies for two-sample designs.

Two independent samples of size ``n`` are drawn from a count (Poisson) or
ordered (discretized Gaussian) family. Empirical DFs are bootstrapped jointly,
and the resulting bands are checked against the population functions. Three
competitor QE-bands are available for comparison: a constant-width bootstrap
band and two jittering bands.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats

from .bandcalc import (df_band_single, df_bands_joint, empirical_quantile,
                       invert_band, qe_band, quantile_band_covers, robust_se,
                       test_equality)
from .core import (Grid, MonotoneStepFn, ProbGrid, QEBand, breakpoint_probs,
                   left_inverse)
from .estimate import edf_values
from .resample import BootstrapConfig, weight_matrix

ORDERED_MASSES = (0.1, 0.16, 0.24, 0.24, 0.16, 0.1)
DEFAULT_CUTOFFS = tuple(float(c) for c in
                        stats.norm.ppf(np.cumsum(ORDERED_MASSES)[:-1]))
FAMILIES = ("poisson", "ordered")


@dataclass(frozen=True)
class SimDesign:
    """One cell of a simulation table.

    ``params`` holds ``(lambda_0, lambda_1)`` for the Poisson family and
    ``(mu_0, mu_1)`` (latent normal means) for the ordered family.
    """

    family: str = "poisson"
    params: Tuple[float, float] = (3.0, 3.0)
    n: int = 400
    p: float = 0.95
    nsim: int = 1000
    B: int = 500
    prob_range: Tuple[float, float] = (0.1, 0.9)
    seed: int = 0
    scheme: str = "exponential"
    cutoffs: Tuple[float, ...] = DEFAULT_CUTOFFS
    grid_mass: float = 0.98
    competitors: bool = False
    length_step: float = 0.01

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if len(self.params) != 2:
            raise ValueError("need one parameter per sample")
        if self.family == "poisson" and min(self.params) <= 0:
            raise ValueError("Poisson rates must be positive")
        if np.any(np.diff(self.cutoffs) <= 0):
            raise ValueError("cutoffs must be strictly increasing")
        lo, hi = self.prob_range
        if not 0 < lo < hi < 1:
            raise ValueError("prob_range must satisfy 0 < lo < hi < 1")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if self.n < 1 or self.nsim < 1 or self.B < 2:
            raise ValueError("n, nsim must be positive and B >= 2")


# -- data generation ---------------------------------------------------------

def gen_poisson(lam: float, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.poisson(lam, size=n).astype(float)


def gen_ordered(mu: float, cutoffs: Sequence[float], n: int,
                rng: np.random.Generator) -> np.ndarray:
    """Number of cutoffs strictly below a latent ``N(mu, 1)`` draw."""
    latent = rng.normal(mu, 1.0, size=n)
    return np.searchsorted(np.asarray(cutoffs), latent, side="left").astype(float)


def ordered_masses(mu: float, cutoffs: Sequence[float]) -> np.ndarray:
    cdf = np.concatenate([stats.norm.cdf(np.asarray(cutoffs) - mu), [1.0]])
    return np.diff(np.concatenate([[0.0], cdf]))


def design_grid(design: SimDesign) -> Grid:
    """Outcome grid and domain for a design.

    Ordered outcomes use their full support. Count outcomes use
    ``{0, ..., y_max}`` with ``y_max`` the smallest integer at which both
    population DFs exceed ``grid_mass``, on an unbounded domain.
    """
    if design.family == "ordered":
        return Grid(np.arange(len(design.cutoffs) + 1, dtype=float))
    mass = design.grid_mass
    y_max = max(int(stats.poisson.ppf(mass, lam)) for lam in design.params)
    return Grid(np.arange(y_max + 1, dtype=float), domain_sup=np.inf)


def population_dfs(design: SimDesign, grid: Grid) -> List[MonotoneStepFn]:
    out = []
    for par in design.params:
        if design.family == "poisson":
            v = stats.poisson.cdf(grid.points, par)
        else:
            v = np.cumsum(ordered_masses(par, design.cutoffs))
            v[-1] = 1.0
        out.append(MonotoneStepFn(grid, np.clip(v, 0.0, 1.0)))
    return out


def relevant_points(design: SimDesign, grid: Grid,
                    pops: Sequence[MonotoneStepFn]) -> np.ndarray:
    """Grid mask of the support the quantiles on ``prob_range`` can reach.

    Coverage of a DF is judged on these points only; far-tail points where
    the sample DF is typically 0 or 1 say nothing about the quantiles of
    interest.
    """
    lo, hi = design.prob_range
    first = min(left_inverse(f, lo) for f in pops)
    last = max(left_inverse(f, hi) for f in pops)
    return (grid.points >= first) & (grid.points <= last)


def _covers_on(band, F, mask) -> bool:
    return bool(np.all(band.lower.values[mask] <= F.values[mask])
                and np.all(F.values[mask] <= band.upper.values[mask]))


def _sample(design: SimDesign, k: int, rng) -> np.ndarray:
    if design.family == "poisson":
        return gen_poisson(design.params[k], design.n, rng)
    return gen_ordered(design.params[k], design.cutoffs, design.n, rng)


# -- weighted quantiles and competitors --------------------------------------

def weighted_quantiles(y, W, probs) -> np.ndarray:
    """Left-inverse of the weighted empirical DF, for every row of ``W``.

    Returns an array of shape ``(B, len(probs))`` (or ``(len(probs),)`` for a
    single weight vector).
    """
    y = np.asarray(y, dtype=float)
    W = np.asarray(W, dtype=float)
    single = W.ndim == 1
    W = np.atleast_2d(W)
    order = np.argsort(y, kind="stable")
    ys = y[order]
    cw = np.cumsum(W[:, order], axis=1)
    cw /= cw[:, -1:]
    probs = np.asarray(probs, dtype=float)
    out = np.empty((W.shape[0], probs.size))
    for b in range(W.shape[0]):
        idx = np.searchsorted(cw[b], probs, side="left")
        out[b] = ys[np.minimum(idx, ys.size - 1)]
    return out[0] if single else out


def competitor_constant_width(y0, y1, W0, W1, p: float,
                              probs) -> QEBand:
    """Bootstrap the raw QE function and take a constant-width sup band."""
    probs = np.asarray(probs, dtype=float)
    d_hat = (weighted_quantiles(y1, np.ones(len(y1)), probs)
             - weighted_quantiles(y0, np.ones(len(y0)), probs))
    d_star = weighted_quantiles(y1, W1, probs) - weighted_quantiles(y0, W0, probs)
    c = float(empirical_quantile(np.max(np.abs(d_star - d_hat), axis=1), p))
    return QEBand(ProbGrid(probs), d_hat - c, d_hat + c)


def competitor_jitter(y0, y1, W0, W1, p: float, probs, noise0, noise1,
                      variant: str = "smoothed") -> QEBand:
    """Sup-t band from the bootstrapped QE function of jittered outcomes.

    ``noise0``/``noise1`` are the Uniform[0, 1) jitters added to each
    sample; they stay fixed across bootstrap draws. ``variant`` chooses the
    band center: the jittered QE estimate ("smoothed") or the raw,
    unjittered one ("raw").
    """
    probs = np.asarray(probs, dtype=float)
    z0 = np.asarray(y0) + noise0
    z1 = np.asarray(y1) + noise1
    d_z = (weighted_quantiles(z1, np.ones(len(z1)), probs)
           - weighted_quantiles(z0, np.ones(len(z0)), probs))
    d_star = weighted_quantiles(z1, W1, probs) - weighted_quantiles(z0, W0, probs)
    se = robust_se(d_star, axis=0)
    ok = se > 0
    t = np.where(ok, np.abs(d_star - d_z) / np.where(ok, se, 1.0), 0.0)
    c = float(empirical_quantile(t.max(axis=1), p))
    half = np.where(ok, c * se, 0.0)
    if variant == "smoothed":
        center = d_z
    elif variant == "raw":
        center = (weighted_quantiles(y1, np.ones(len(y1)), probs)
                  - weighted_quantiles(y0, np.ones(len(y0)), probs))
    else:
        raise ValueError(f"unknown jitter variant {variant!r}")
    return QEBand(ProbGrid(probs), center - half, center + half)


@dataclass(frozen=True)
class DirectSupTDiagnostic:
    """Why a studentized bootstrap of the raw QE function is not usable."""

    zero_se_fraction: float
    zero_se_probs: np.ndarray
    computable: bool


def direct_supt_diagnostic(y0, y1, W0, W1, probs) -> DirectSupTDiagnostic:
    """Check the pointwise bootstrap SEs of the raw QE function.

    With discrete outcomes the bootstrapped sample quantiles are constant
    at most probability levels, so the robust SE is zero there and the
    max-t statistic is undefined. No band is returned.
    """
    probs = np.asarray(probs, dtype=float)
    d_star = weighted_quantiles(y1, W1, probs) - weighted_quantiles(y0, W0, probs)
    se = robust_se(d_star, axis=0)
    zero = se == 0
    return DirectSupTDiagnostic(float(zero.mean()), probs[zero],
                                bool(not zero.any()))


# -- one replication ---------------------------------------------------------

def _replication_seeds(seed: int, r: int):
    data_ss = np.random.SeedSequence(int(seed), spawn_key=(int(r), 0))
    boot = np.random.SeedSequence(int(seed), spawn_key=(int(r), 1))
    master = int(boot.generate_state(1, dtype=np.uint64)[0])
    return np.random.Generator(np.random.Philox(data_ss)), master


def _qe_covers(band: QEBand, truth: np.ndarray) -> bool:
    return quantile_band_covers(band, truth, use_support=False)


def run_replication(design: SimDesign, r: int) -> Dict[str, float]:
    """Outcomes of replication ``r``; a pure function of ``(design, r)``."""
    grid = design_grid(design)
    pops = population_dfs(design, grid)
    rel = relevant_points(design, grid, pops)
    rng, master = _replication_seeds(design.seed, r)
    y = [_sample(design, 0, rng), _sample(design, 1, rng)]
    n = design.n
    est = np.stack([edf_values(yk, grid) for yk in y])

    cfg = BootstrapConfig(design.scheme, design.B, master)
    W = weight_matrix(cfg, 2 * n)
    Wk = [W[:, :n], W[:, n:]]
    draws = np.stack([edf_values(y[k], grid, Wk[k]) for k in range(2)], axis=1)

    lo, hi = design.prob_range
    out: Dict[str, float] = {}

    # single-function bands
    for k in range(2):
        jb = df_band_single(est[k], draws[:, k, :], design.p, grid)
        band = jb.bands[0]
        a = breakpoint_probs([band.lower, band.upper, pops[k]], lo, hi)
        qf_ok = bool(np.all((left_inverse(band.upper, a)
                             <= left_inverse(pops[k], a))
                            & (left_inverse(pops[k], a)
                               <= left_inverse(band.lower, a))))
        out[f"cov_f{k}"] = float(_covers_on(band, pops[k], rel) and qf_ok)

    # joint bands
    jb = df_bands_joint(est, draws, design.p, grid)
    b0, b1 = jb.bands
    fns = [b0.lower, b0.upper, b1.lower, b1.upper] + pops
    a = breakpoint_probs(fns, lo, hi)
    pg = ProbGrid(a)
    q = [_qband(b, pg) for b in (b0, b1)]
    truth_q = [left_inverse(f, a) for f in pops]
    qe = qe_band(q[1], q[0])
    delta = truth_q[1] - truth_q[0]
    qe_ok = _qe_covers(qe, delta)
    qf_ok = all(quantile_band_covers(q[k], truth_q[k]) for k in range(2))
    df_ok = _covers_on(b0, pops[0], rel) and _covers_on(b1, pops[1], rel)
    out["cov_all"] = float(df_ok and qf_ok and qe_ok)
    out["cov_qe"] = float(qe_ok)
    out["reject"] = float(test_equality(qe).reject)

    probs = _length_grid(design)
    pg_len = ProbGrid(probs)
    ql = [_qband(b, pg_len) for b in (b0, b1)]
    qe_len = qe_band(ql[1], ql[0])
    out["len_new"] = float(np.mean(qe_len.width()))
    out["crit_joint"] = jb.report.c

    if design.competitors:
        truth_l = (left_inverse(pops[1], probs) - left_inverse(pops[0], probs))
        cw = competitor_constant_width(y[0], y[1], Wk[0], Wk[1], design.p, probs)
        out["cov_boot"] = float(_qe_covers(cw, truth_l))
        out["len_boot"] = float(np.mean(cw.width()))
        noise = [rng.random(n), rng.random(n)]
        for name, variant in (("jitter1", "smoothed"), ("jitter2", "raw")):
            jt = competitor_jitter(y[0], y[1], Wk[0], Wk[1], design.p, probs,
                                   noise[0], noise[1], variant)
            out[f"cov_{name}"] = float(_qe_covers(jt, truth_l))
            out[f"len_{name}"] = float(np.mean(jt.width()))
    return out


def _qband(band, pg):
    return invert_band(band, pg, augment=False)


def _length_grid(design: SimDesign) -> np.ndarray:
    lo, hi = design.prob_range
    m = int(round((hi - lo) / design.length_step))
    return np.round(lo + design.length_step * np.arange(m + 1), 12)


# -- aggregation -------------------------------------------------------------

RATE_KEYS = ("cov_f0", "cov_f1", "cov_all", "cov_qe", "reject",
             "cov_boot", "cov_jitter1", "cov_jitter2")
LENGTH_KEYS = ("len_new", "len_boot", "len_jitter1", "len_jitter2")


@dataclass
class SimReport:
    """Aggregated Monte Carlo results for one design."""

    design: SimDesign
    rates: Dict[str, float]
    rate_se: Dict[str, float]
    lengths: Dict[str, float]
    length_se: Dict[str, float]
    nsim: int
    runtime: float = 0.0
    metadata: Dict[str, object] = field(default_factory=dict)

    def row(self) -> Dict[str, object]:
        d = self.design
        row: Dict[str, object] = {"family": d.family,
                                  "param0": d.params[0], "param1": d.params[1],
                                  "n": d.n, "p": d.p, "nsim": self.nsim,
                                  "B": d.B}
        row.update(self.rates)
        row.update({f"{k}_se": v for k, v in self.rate_se.items()})
        row.update(self.lengths)
        row.update({f"{k}_se": v for k, v in self.length_se.items()})
        return row


def aggregate(design: SimDesign, results: Sequence[Dict[str, float]],
              runtime: float = 0.0) -> SimReport:
    m = len(results)
    rates, rate_se, lengths, length_se = {}, {}, {}, {}
    for key in RATE_KEYS:
        if key in results[0]:
            x = np.array([r[key] for r in results])
            rates[key] = float(x.mean())
            rate_se[key] = float(math.sqrt(rates[key] * (1 - rates[key]) / m))
    unbounded = {}
    for key in LENGTH_KEYS:
        if key in results[0]:
            x = np.array([r[key] for r in results])
            # a band reaching the unbounded domain supremum has infinite
            # length; average over the bounded ones and count the rest
            x_fin = x[np.isfinite(x)]
            unbounded[key] = int(x.size - x_fin.size)
            k = x_fin.size
            lengths[key] = float(x_fin.mean()) if k else math.inf
            length_se[key] = float(x_fin.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    meta = {"grid": design_grid(design).points.tolist(),
            "scheme": design.scheme,
            "jitter_noise": "Uniform[0,1) added to counts and ordered outcomes alike",
            "qe_length": "mean width over the evenly spaced probability grid",
            "unbounded_bands": unbounded}
    return SimReport(design, rates, rate_se, lengths, length_se, m,
                     runtime, meta)


def _run_chunk(design: SimDesign, reps: Sequence[int]):
    return [run_replication(design, r) for r in reps]


def run_design(design: SimDesign, n_jobs: int = 1) -> SimReport:
    """Run all replications of ``design`` and aggregate.

    Replications are independent and seeded by ``(design.seed, r)``;
    the result is the same for any ``n_jobs``.
    """
    t0 = time.perf_counter()
    reps = list(range(design.nsim))
    if n_jobs > 1:
        chunks = [reps[i::n_jobs] for i in range(n_jobs)]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_run_chunk, [design] * n_jobs, chunks))
        by_rep = {}
        for chunk, res in zip(chunks, parts):
            by_rep.update(zip(chunk, res))
        results = [by_rep[r] for r in reps]
    else:
        results = _run_chunk(design, reps)
    return aggregate(design, results, time.perf_counter() - t0)


def report_metadata(report: SimReport) -> Dict[str, object]:
    """JSON-ready description of the design, seeds, and runtime."""
    d = asdict(report.design)
    return {"design": d, "nsim": report.nsim,
            "runtime_seconds": report.runtime, **report.metadata}
