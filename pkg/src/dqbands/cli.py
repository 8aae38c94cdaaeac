"""Command-line front end: ``dqbands bands | decompose | simulate``.

Configuration comes from an optional JSON file; the flags ``--level``,
``--draws``, ``--seed``, ``--link``, ``--support`` and ``--grid`` override
file values. Every output file carries the package version and seed along with a
hash of the resolved configuration, and is written atomically.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .bandcalc import (AllPointsExcludedError, EmptyBandError, df_bands_joint,
                       invert_band, jump_augmented_grid, qe_band, ratio_band,
                       restrict_support, test_equality)
from .core import DFBand, Grid, MonotoneStepFn, ProbGrid, QEBand, QuantileBand
from .estimate import (LINK_KINDS, ConvergenceError, Dataset, DesignSpec,
                       counterfactual, dr_fit, edf_values,
                       poisson_df_matrix, poisson_fit)
from .resample import BootstrapConfig, EstimatorError, bootstrap_dfs
from .simlab import SimDesign, report_metadata, run_design

log = logging.getLogger("dqbands")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MISSING = {"", "na", "nan", "null", "none"}


class ConfigError(Exception):
    """Invalid or inconsistent configuration."""


class DataError(Exception):
    """Input data violate the declared schema."""


# -- configuration -----------------------------------------------------------

BANDS_DEFAULTS: Dict[str, object] = {
    "data": None,
    "outcome": "y",
    "group": None,
    "cluster": None,
    "weights": None,
    "covariates": [],
    "categorical": [],
    "interactions": [],
    "saturated": False,
    "estimator": "edf",
    "pinned": None,
    "integrate_over": "pooled",
    "level": 0.95,
    "draws": 500,
    "seed": 0,
    "scheme": "exponential",
    "grid": None,
    "domain_sup": None,
    "prob_grid": {"lo": 0.01, "hi": 0.99, "step": 0.01},
    "support": "auto",
    "shaping": "rearrange",
    "iso_weight": 0.0,
    "contrast": "difference",
    "pairs": None,
    "groups": None,
    "output": "dqbands_out",
    "plots": False,
    "jobs": 1,
}

SIM_DEFAULTS: Dict[str, object] = {
    "family": "poisson",
    "params": [[3.0, 3.0]],
    "n": [400],
    "level": [0.95],
    "nsim": 1000,
    "draws": 500,
    "seed": 0,
    "scheme": "exponential",
    "prob_range": [0.1, 0.9],
    "grid_mass": 0.98,
    "cutoffs": None,
    "competitors": False,
    "output": "dqbands_sim",
    "jobs": 1,
    "record_runtime": False,
}

# keys that never influence numerical results
_UNHASHED = ("output", "jobs", "record_runtime")


def config_hash(cfg: Dict[str, object]) -> str:
    """SHA-256 of the canonical JSON form of the result-relevant settings."""
    core = {k: v for k, v in cfg.items() if k not in _UNHASHED}
    text = json.dumps(core, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _parse_number_list(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse number list {text!r}") from None


def parse_grid_flag(text: str):
    """``auto``, ``lo:hi`` or ``lo:hi:step`` (inclusive), or ``v1,v2,...``."""
    text = text.strip()
    if text == "auto":
        return "auto"
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad grid range {text!r}")
        try:
            lo, hi = float(parts[0]), float(parts[1])
            step = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise ConfigError(f"bad grid range {text!r}") from None
        return {"from": lo, "to": hi, "step": step}
    return _parse_number_list(text)


def parse_support_flag(text: str):
    text = text.strip()
    if text in ("auto", "none"):
        return text
    return _parse_number_list(text)


def load_config(path: Optional[str], defaults: Dict[str, object],
                overrides: Dict[str, object]) -> Dict[str, object]:
    """Merge defaults, the JSON file and flag overrides (flags win)."""
    cfg = copy.deepcopy(defaults)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                filed = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(filed, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(filed) - set(defaults))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(filed)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _expand_grid(spec, outcomes: np.ndarray, domain_sup) -> Grid:
    if spec is None:
        raise ConfigError("an outcome grid is required (--grid or the 'grid' "
                          "key; 'auto' uses the observed outcome values)")
    if isinstance(spec, str):
        spec = parse_grid_flag(spec)
    if spec == "auto":
        pts = np.unique(outcomes)
    elif isinstance(spec, dict):
        try:
            lo, hi = float(spec["from"]), float(spec["to"])
            step = float(spec.get("step", 1.0))
        except (KeyError, TypeError, ValueError):
            raise ConfigError("grid range needs numeric 'from', 'to', 'step'") from None
        if step <= 0 or hi < lo:
            raise ConfigError("grid range must have step > 0 and to >= from")
        m = int(math.floor((hi - lo) / step + 1e-9))
        pts = lo + step * np.arange(m + 1)
    elif isinstance(spec, list):
        pts = np.asarray(spec, dtype=float)
    else:
        raise ConfigError(f"cannot interpret grid {spec!r}")
    sup = None
    if domain_sup is not None:
        sup = math.inf if str(domain_sup).lower() in ("inf", "infinity") else float(domain_sup)
    try:
        return Grid(pts, domain_sup=sup)
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from None


def _expand_prob_grid(spec) -> ProbGrid:
    try:
        if isinstance(spec, dict):
            lo, hi, step = float(spec["lo"]), float(spec["hi"]), float(spec["step"])
            m = int(math.floor((hi - lo) / step + 1e-9))
            pts = np.round(lo + step * np.arange(m + 1), 12)
        else:
            pts = np.asarray(spec, dtype=float)
        return ProbGrid(pts)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid probability grid: {exc}") from None


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    link: Optional[str] = None


def parse_estimator(text: str) -> EstimatorSpec:
    """``edf``, ``poisson`` or ``dr:<link>``."""
    if text in ("edf", "poisson"):
        return EstimatorSpec(text)
    if text.startswith("dr:") and text[3:] in LINK_KINDS:
        return EstimatorSpec("dr", text[3:])
    raise ConfigError(f"unknown estimator {text!r}; use edf, poisson or "
                      f"dr:<{'|'.join(LINK_KINDS)}>")


def _check_bands_config(cfg: Dict[str, object]) -> None:
    level = cfg["level"]
    if not isinstance(level, (int, float)) or not 0 < float(level) < 1:
        raise ConfigError("level must lie in (0, 1)")
    if not isinstance(cfg["draws"], int) or cfg["draws"] < 2:
        raise ConfigError("draws must be an integer >= 2")
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be a nonnegative 64-bit integer")
    if not isinstance(cfg["jobs"], int) or cfg["jobs"] < 1:
        raise ConfigError("jobs must be a positive integer")
    if cfg["scheme"] not in ("exponential", "multinomial"):
        raise ConfigError("scheme must be exponential or multinomial")
    if cfg["shaping"] not in ("rearrange", "isotonize", "mix", "intersect"):
        raise ConfigError("shaping must be rearrange, isotonize, mix or intersect")
    if cfg["contrast"] not in ("difference", "ratio"):
        raise ConfigError("contrast must be difference or ratio")
    if cfg["integrate_over"] not in ("pooled", "own"):
        raise ConfigError("integrate_over must be pooled or own")
    if cfg["pinned"] not in (None, "poisson"):
        raise ConfigError("pinned must be null or 'poisson'")
    est = parse_estimator(str(cfg["estimator"]))
    if cfg["pinned"] == "poisson" and (est.kind, est.link) != ("dr", "gamma-incomplete"):
        raise ConfigError("pinned coefficients need estimator dr:gamma-incomplete")
    if not isinstance(cfg["covariates"], list):
        raise ConfigError("covariates must be a list of column names")


# -- data ingestion ------------------------------------------------------------

def _is_missing(v: str) -> bool:
    return v.strip().lower() in MISSING


def read_dataset(path: str, cfg: Dict[str, object]) -> Tuple[Dataset, int]:
    """Load the declared columns of a CSV file into a :class:`Dataset`.

    Rows with a missing outcome, group, cluster, weight or covariate are
    dropped; the count is returned and logged.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        declared = [cfg["outcome"]] + list(cfg["covariates"])
        for key in ("group", "cluster", "weights"):
            if cfg[key] is not None:
                declared.append(cfg[key])
        missing_cols = [c for c in declared if c not in header]
        if missing_cols:
            raise DataError(f"{path}: unknown column(s) {', '.join(map(str, missing_cols))}")
        idx = {c: header.index(c) for c in declared}
        numeric = [cfg["outcome"]] + list(cfg["covariates"])
        if cfg["weights"] is not None:
            numeric.append(cfg["weights"])
        rows, dropped = [], 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, "
                                f"header has {len(header)}")
            vals = {c: row[i] for c, i in idx.items()}
            if any(_is_missing(v) for v in vals.values()):
                dropped += 1
                continue
            parsed = {}
            for c in numeric:
                try:
                    x = float(vals[c])
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {c!r}: "
                                    f"non-numeric value {vals[c]!r}") from None
                if not math.isfinite(x):
                    raise DataError(f"{path}: row {lineno}, column {c!r}: "
                                    f"non-finite value {vals[c]!r}")
                parsed[c] = x
            if cfg["weights"] is not None and parsed[cfg["weights"]] < 0:
                raise DataError(f"{path}: row {lineno}, column "
                                f"{cfg['weights']!r}: negative weight")
            rows.append((parsed, vals))
    if dropped:
        log.warning("dropped %d row(s) with missing values", dropped)
    if not rows:
        raise DataError(f"{path}: no complete rows")
    y = np.array([p[cfg["outcome"]] for p, _ in rows])
    X = np.array([[p[c] for c in cfg["covariates"]] for p, _ in rows],
                 dtype=float).reshape(len(rows), len(cfg["covariates"]))
    g = None if cfg["group"] is None else np.array([v[cfg["group"]].strip() for _, v in rows], dtype=object)
    cl = None if cfg["cluster"] is None else np.array([v[cfg["cluster"]].strip() for _, v in rows], dtype=object)
    w = None if cfg["weights"] is None else np.array([p[cfg["weights"]] for p, _ in rows])
    try:
        data = Dataset(y, X, g, cl, w, tuple(cfg["covariates"]))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return data, dropped


# -- number formatting and atomic output ------------------------------------------

def fmt(x) -> str:
    """17-significant-digit decimal, exact on re-parse."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def fmt_set(values) -> str:
    """Finite set as ``{v1;v2;...}``; ``{}`` is the empty set."""
    return "{" + ";".join(fmt(v) for v in values) + "}"


def parse_set(text: str) -> Optional[np.ndarray]:
    text = text.strip()
    if text == "":
        return None
    if not (text.startswith("{") and text.endswith("}")):
        raise ValueError(f"malformed set {text!r}")
    body = text[1:-1]
    return np.array([float(t) for t in body.split(";")] if body else [], dtype=float)


def _json_text(obj, indent: int = 0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_json_text(v, indent + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_json_text(v) for v in obj) + "]"
        items = [inner + _json_text(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt(x) if math.isfinite(x) else json.dumps(fmt(x))
    return json.dumps(str(obj))


def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path``, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _meta(cfg) -> Dict[str, object]:
    return {"version": __version__, "seed": cfg["seed"],
            "config_sha256": config_hash(cfg)}


def _csv_text(meta, header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    buf.write(f"# dqbands {meta['version']} seed={meta['seed']} "
              f"config_sha256={meta['config_sha256']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_csv_rows(path: str) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# -- band report structures ------------------------------------------------------

@dataclass
class BandReport:
    """Everything one ``bands``/``decompose`` run emits."""

    labels: List[str]
    grid: Grid
    estimates: List[MonotoneStepFn]
    df_bands: List[DFBand]
    qf_bands: List[QuantileBand]
    qe_labels: List[str]
    qe_bands: List[QEBand]
    summary: Dict[str, object]


def df_rows(labels, bands, estimates) -> List[List[str]]:
    rows = []
    for lab, band, est in zip(labels, bands, estimates):
        for y, e, lo, up in zip(band.grid.points, est.values,
                                band.lower.values, band.upper.values):
            rows.append([lab, fmt(y), fmt(e), fmt(lo), fmt(up)])
    return rows


def qf_rows(labels, qbands) -> List[List[str]]:
    rows = []
    for lab, qb in zip(labels, qbands):
        for i, a in enumerate(qb.prob_grid.indices):
            adm = "" if qb.admissible is None else fmt_set(qb.admissible[i])
            rows.append([lab, fmt(a), fmt(qb.lo[i]), fmt(qb.hi[i]), adm])
    return rows


def qe_rows(labels, qes) -> List[List[str]]:
    rows = []
    for lab, qe in zip(labels, qes):
        for i, a in enumerate(qe.prob_grid.indices):
            adm = "" if qe.admissible is None else fmt_set(qe.admissible[i])
            rows.append([lab, fmt(a), fmt(qe.lo[i]), fmt(qe.hi[i]), adm])
    return rows


DF_HEADER = ["group", "y", "estimate", "lower", "upper"]
QF_HEADER = ["group", "a", "q_lo", "q_hi", "admissible-set"]
QE_HEADER = ["pair", "a", "d_lo", "d_hi", "admissible-set"]


def read_df_csv(path: str, level: float, domain_sup: Optional[float] = None):
    """Parse a DF-band file into ``{group: (estimate, DFBand)}``."""
    by: Dict[str, List[List[float]]] = {}
    for r in _read_csv_rows(path):
        by.setdefault(r["group"], []).append(
            [float(r["y"]), float(r["estimate"]), float(r["lower"]), float(r["upper"])])
    out = {}
    for lab, vals in by.items():
        arr = np.array(vals)
        grid = Grid(arr[:, 0], domain_sup=domain_sup)
        out[lab] = (MonotoneStepFn(grid, arr[:, 1]),
                    DFBand(MonotoneStepFn(grid, arr[:, 2]),
                           MonotoneStepFn(grid, arr[:, 3]), level))
    return out


def _read_interval_csv(path: str, key: str, lo: str, hi: str):
    by: Dict[str, list] = {}
    for r in _read_csv_rows(path):
        by.setdefault(r[key], []).append(
            (float(r["a"]), float(r[lo]), float(r[hi]), parse_set(r["admissible-set"])))
    return by


def read_qf_csv(path: str) -> Dict[str, QuantileBand]:
    """Parse a QF-band file into ``{group: QuantileBand}``."""
    out = {}
    for lab, recs in _read_interval_csv(path, "group", "q_lo", "q_hi").items():
        a, lo, hi, sets = zip(*recs)
        adm = None if sets[0] is None else tuple(sets)
        out[lab] = QuantileBand(ProbGrid(a), np.array(lo), np.array(hi), adm)
    return out


def read_qe_csv(path: str, kind: str = "difference") -> Dict[str, QEBand]:
    """Parse a QE-band file into ``{pair: QEBand}``."""
    out = {}
    for lab, recs in _read_interval_csv(path, "pair", "d_lo", "d_hi").items():
        a, lo, hi, sets = zip(*recs)
        adm = None if sets[0] is None else tuple(sets)
        out[lab] = QEBand(ProbGrid(a), np.array(lo), np.array(hi), adm, kind)
    return out


# -- SVG step plots ----------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg_panel(title: str, xs: np.ndarray, series, x_label: str,
               y_label: str, x_right: Optional[float] = None) -> str:
    """One panel of shaded band rectangles and optional step lines.

    ``series`` holds ``(label, lo, hi, center_or_None)`` tuples; the value at
    ``xs[i]`` holds on ``[xs[i], xs[i+1])``.
    """
    W, H, m = 640, 400, 56
    xs = np.asarray(xs, dtype=float)
    right = xs[-1] + (xs[-1] - xs[0]) / max(len(xs) - 1, 1) if x_right is None else x_right
    edges = np.append(xs, right)
    finite = np.concatenate([np.asarray(v, dtype=float)[np.isfinite(v)]
                             for s in series for v in s[1:] if v is not None])
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(x):
        return m + (float(x) - edges[0]) / (edges[-1] - edges[0]) * (W - 2 * m)

    def sy(y):
        y = min(max(float(y), y0), y1)
        return H - m - (y - y0) / (y1 - y0) * (H - 2 * m)

    out = [f'<g><text x="{W / 2:.1f}" y="24" text-anchor="middle" '
           f'font-family="sans-serif" font-size="15">{title}</text>',
           f'<rect x="{m}" y="{m}" width="{W - 2 * m}" height="{H - 2 * m}" '
           f'fill="none" stroke="#444"/>',
           f'<text x="{W / 2:.1f}" y="{H - 14}" text-anchor="middle" '
           f'font-family="sans-serif" font-size="12">{x_label}</text>',
           f'<text x="16" y="{H / 2:.1f}" transform="rotate(-90 16 {H / 2:.1f})" '
           f'text-anchor="middle" font-family="sans-serif" font-size="12">{y_label}</text>']
    for tick in np.linspace(y0 + pad, y1 - pad, 5):
        out.append(f'<text x="{m - 6}" y="{sy(tick) + 4:.1f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{tick:.3g}</text>')
    for tick in np.linspace(edges[0], edges[-1], 6):
        out.append(f'<text x="{sx(tick):.1f}" y="{H - m + 14}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="10">{tick:.3g}</text>')
    for j, (label, lo, hi, center) in enumerate(series):
        col = _COLORS[j % len(_COLORS)]
        for i in range(len(xs)):
            top, bot = sy(hi[i]), sy(lo[i])
            out.append(f'<rect x="{sx(edges[i]):.2f}" y="{top:.2f}" '
                       f'width="{sx(edges[i + 1]) - sx(edges[i]):.2f}" '
                       f'height="{max(bot - top, 0.8):.2f}" fill="{col}" '
                       f'fill-opacity="0.25" stroke="none"/>')
        if center is not None:
            pts = []
            for i in range(len(xs)):
                yv = sy(center[i])
                pts.append(f"{sx(edges[i]):.2f},{yv:.2f} {sx(edges[i + 1]):.2f},{yv:.2f}")
            out.append(f'<polyline points="{" ".join(pts)}" fill="none" '
                       f'stroke="{col}" stroke-width="1.5"/>')
        out.append(f'<text x="{W - m + 4}" y="{m + 14 * (j + 1)}" fill="{col}" '
                   f'font-family="sans-serif" font-size="11">{label}</text>')
    out.append("</g>")
    return "\n".join(out)


def svg_document(meta, panels: Sequence[str]) -> str:
    H = 400
    body = [f'<g transform="translate(0,{k * H})">{p}</g>' for k, p in enumerate(panels)]
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="720" '
            f'height="{H * len(panels)}" viewBox="0 0 720 {H * len(panels)}">\n'
            f'<metadata>dqbands {meta["version"]} seed={meta["seed"]} '
            f'config_sha256={meta["config_sha256"]}</metadata>\n'
            + "\n".join(body) + "\n</svg>\n")


def plot_report(rep: BandReport, meta) -> Dict[str, str]:
    pts = rep.grid.points
    df_panel = _svg_panel(
        "Distribution functions", pts,
        [(lab, b.lower.values, b.upper.values, e.values)
         for lab, b, e in zip(rep.labels, rep.df_bands, rep.estimates)],
        "y", "F(y)")
    qf_panel = _svg_panel(
        "Quantile functions", rep.qf_bands[0].prob_grid.indices,
        [(lab, q.lo, q.hi, None) for lab, q in zip(rep.labels, rep.qf_bands)],
        "a", "quantile", x_right=1.0)
    files = {"df_bands.svg": svg_document(meta, [df_panel]),
             "qf_bands.svg": svg_document(meta, [qf_panel])}
    if rep.qe_bands:
        qe_panels = [_svg_panel(f"Quantile effect: {lab}", qe.prob_grid.indices,
                                [(lab, qe.lo, qe.hi, None)], "a", "effect",
                                x_right=1.0)
                     for lab, qe in zip(rep.qe_labels, rep.qe_bands)]
        files["qe_bands.svg"] = svg_document(meta, qe_panels)
    return files


def write_report(rep: BandReport, cfg, out_dir: str) -> List[str]:
    meta = _meta(cfg)
    files = {
        "df_bands.csv": _csv_text(meta, DF_HEADER,
                                  df_rows(rep.labels, rep.df_bands, rep.estimates)),
        "qf_bands.csv": _csv_text(meta, QF_HEADER, qf_rows(rep.labels, rep.qf_bands)),
        "qe_bands.csv": _csv_text(meta, QE_HEADER, qe_rows(rep.qe_labels, rep.qe_bands)),
        "summary.json": _json_text({"meta": meta, **rep.summary}) + "\n",
    }
    if cfg.get("plots"):
        files.update(plot_report(rep, meta))
    written = []
    for name in sorted(files):
        path = os.path.join(out_dir, name)
        atomic_write(path, files[name])
        written.append(path)
    return written


# -- estimators and the band pipeline ---------------------------------------------

def _design(cfg) -> DesignSpec:
    try:
        return DesignSpec(tuple(cfg["covariates"]), tuple(cfg["categorical"]),
                          tuple(tuple(p) for p in cfg["interactions"]),
                          bool(cfg["saturated"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid covariate design: {exc}") from None


@dataclass(frozen=True)
class FunctionSpec:
    """One DF to estimate.

    ``kind="edf"``: weighted empirical DF of the rows in ``fit_mask``.
    ``kind="model"``: the configured regression fitted on ``fit_mask`` and
    integrated over the covariates of the rows in ``over_mask``.
    """

    label: str
    kind: str
    fit_mask: np.ndarray
    over_mask: Optional[np.ndarray] = None


class Pipeline:
    """Maps a row-weight vector to the K DF estimates on the grid."""

    def __init__(self, data: Dataset, grid: Grid, cfg,
                 functions: Sequence[FunctionSpec]):
        self.data, self.grid, self.cfg = data, grid, cfg
        self.functions = list(functions)
        self.est = parse_estimator(str(cfg["estimator"]))
        self.basis = None
        self.flags: Dict[str, object] = {}
        if any(f.kind == "model" for f in self.functions):
            try:
                self.basis = _design(cfg).build(data)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"invalid covariate design: {exc}") from None

    @property
    def edf_only(self) -> bool:
        return all(f.kind == "edf" for f in self.functions)

    def _model_df(self, spec: FunctionSpec, w_all, record: bool) -> np.ndarray:
        fm, om = spec.fit_mask, spec.over_mask
        sub = Dataset(self.data.outcome[fm], self.data.covariates[fm],
                      weights=w_all[fm], covariate_names=self.data.covariate_names)
        X_over, w_over = self.data.covariates[om], w_all[om]
        if self.est.kind == "poisson":
            beta = poisson_fit(sub, basis=self.basis)
            mat = poisson_df_matrix(self.basis, self.data.covariate_names,
                                    X_over, self.grid, beta)
            return np.clip(w_over @ mat / w_over.sum(), 0.0, 1.0)
        pinned = poisson_fit(sub, basis=self.basis) if self.cfg["pinned"] == "poisson" else None
        fit = dr_fit(sub, self.grid, self.est.link, basis=self.basis,
                     pinned=pinned, iso_weight=float(self.cfg["iso_weight"]))
        if record:
            pts = self.grid.points
            self.flags[spec.label] = {
                "degenerate_y": [float(y) for y, d in zip(pts, fit.degenerate) if d],
                "separated_y": [float(y) for y, s in zip(pts, fit.separated) if s]}
        return counterfactual(fit, X_over, w_over).values

    def __call__(self, w=None, record: bool = False) -> np.ndarray:
        w_all = self.data.weights if w is None else self.data.weights * w
        out = []
        for spec in self.functions:
            if spec.kind == "edf":
                out.append(edf_values(self.data.outcome[spec.fit_mask], self.grid,
                                      w_all[spec.fit_mask]))
            else:
                out.append(self._model_df(spec, w_all, record))
        return np.stack(out)

    def batch(self, W) -> np.ndarray:
        """``(B, K, T)`` empirical DFs for a whole weight matrix."""
        W = self.data.weights[None, :] * np.asarray(W, dtype=float)
        return np.stack([edf_values(self.data.outcome[f.fit_mask], self.grid,
                                    W[:, f.fit_mask]) for f in self.functions],
                        axis=1)


def _support(cfg, data: Dataset):
    spec = cfg["support"]
    if isinstance(spec, str):
        spec = parse_support_flag(spec)
    if spec is None or spec == "none":
        return None
    if spec == "auto":
        return np.unique(data.outcome)
    if isinstance(spec, list) and spec:
        try:
            return np.asarray(spec, dtype=float)
        except (TypeError, ValueError):
            pass
    raise ConfigError(f"cannot interpret support {spec!r}")


def compute_bands(data: Dataset, cfg, functions: Sequence[FunctionSpec],
                  pairs: Sequence[Tuple[str, int, int]]) -> BandReport:
    """Joint bootstrap, DF-bands, inverted QF-bands and QE contrasts."""
    grid = _expand_grid(cfg["grid"], data.outcome, cfg["domain_sup"])
    pg = _expand_prob_grid(cfg["prob_grid"])
    pipe = Pipeline(data, grid, cfg, functions)
    labels = [f.label for f in functions]
    boot = BootstrapConfig(cfg["scheme"], int(cfg["draws"]), int(cfg["seed"]))
    est = pipe(None, record=True)
    if pipe.edf_only:
        draws = bootstrap_dfs(pipe.batch, data.n, boot, clusters=data.cluster,
                              vectorized=True, iso_weight=float(cfg["iso_weight"]))
    else:
        draws = bootstrap_dfs(pipe, data.n, boot, clusters=data.cluster,
                              n_jobs=int(cfg["jobs"]),
                              iso_weight=float(cfg["iso_weight"]))
    jb = df_bands_joint(est, draws, float(cfg["level"]), grid,
                        method=cfg["shaping"], iso_weight=float(cfg["iso_weight"]))
    common = jump_augmented_grid(
        [f for b in jb.bands for f in (b.lower, b.upper)], pg)
    support = _support(cfg, data)
    qf = []
    for b in jb.bands:
        q = invert_band(b, common, augment=False)
        qf.append(restrict_support(q, support) if support is not None else q)

    qe_labels, qe_list, tests = [], [], []
    for name, j, m in pairs:
        if cfg["contrast"] == "ratio":
            try:
                qe = ratio_band(qf[j], qf[m])
            except ValueError as exc:
                raise DataError(f"ratio contrast {name}: {exc}") from None
        else:
            qe = qe_band(qf[j], qf[m])
            t = test_equality(qe, use_support=support is not None)
            tests.append({"pair": name, "reject": t.reject,
                          "rejecting_a": [float(a) for a in qe.prob_grid.indices[t.indices]]})
        qe_labels.append(name)
        qe_list.append(qe)

    rep = jb.report
    summary = {
        "functions": labels,
        "estimator": str(cfg["estimator"]),
        "level": float(cfg["level"]),
        "draws": int(cfg["draws"]),
        "scheme": cfg["scheme"],
        "shaping": cfg["shaping"],
        "n_rows": int(data.n),
        "grid": [float(y) for y in grid.points],
        "domain_sup": float(grid.domain_sup),
        "critical_value": float(rep.c),
        "excluded_points": [{"function": labels[k], "y": float(grid.points[t])}
                            for k, t in zip(*np.nonzero(rep.excluded))],
        "equality_tests": tests,
        "empty_admissible": [
            {"function": lab, "a": [float(a) for a in q.prob_grid.indices[q.empty]]}
            for lab, q in zip(labels, qf) if q.empty.any()],
        "fit_flags": pipe.flags,
    }
    return BandReport(labels, grid, jb.estimates, jb.bands, qf,
                      qe_labels, qe_list, summary)


# -- commands ----------------------------------------------------------------------

def _require_data(cfg) -> str:
    if not cfg.get("data"):
        raise ConfigError("no data file given (use --data or the 'data' key)")
    return str(cfg["data"])


def cmd_bands(cfg) -> BandReport:
    """Bands for every group's DF and QF, and QE bands for the pairs."""
    _check_bands_config(cfg)
    data, dropped = read_dataset(_require_data(cfg), cfg)
    labels = data.groups
    index = {lab: i for i, lab in enumerate(labels)}
    if cfg["pairs"] is None:
        pairs = [(f"{lab}-{labels[0]}", index[lab], 0) for lab in labels[1:]]
    else:
        pairs = []
        for pr in cfg["pairs"]:
            if not (isinstance(pr, list) and len(pr) == 2):
                raise ConfigError("pairs must be a list of [group_j, group_m]")
            j, m = (str(v) for v in pr)
            if j not in index or m not in index:
                raise ConfigError(f"pair {pr} names an unknown group")
            pairs.append((f"{j}-{m}", index[j], index[m]))
    kind = "edf" if parse_estimator(str(cfg["estimator"])).kind == "edf" else "model"
    pooled = cfg["integrate_over"] == "pooled"
    everyone = np.ones(data.n, dtype=bool)
    functions = []
    for lab in labels:
        mask = data.group.astype(str) == lab
        functions.append(FunctionSpec(lab, kind, mask, everyone if pooled else mask))
    rep = compute_bands(data, cfg, functions, pairs)
    rep.summary["dropped_rows"] = dropped
    return rep


def cmd_decompose(cfg) -> BandReport:
    """Observed DFs of groups W and B plus the counterfactual W|B.

    QE contrasts: raw gap ``Q_W - Q_B``, composition ``Q_W - Q_W|B`` and
    unexplained ``Q_W|B - Q_B``.
    """
    _check_bands_config(cfg)
    groups = cfg["groups"]
    if not (isinstance(groups, list) and len(groups) == 2):
        raise ConfigError("decompose needs 'groups': [W, B]")
    if cfg["group"] is None:
        raise ConfigError("decompose needs a 'group' column")
    if parse_estimator(str(cfg["estimator"])).kind == "edf":
        raise ConfigError("decompose needs a model estimator (dr:<link> or poisson)")
    ref, comp = (str(g) for g in groups)
    data, dropped = read_dataset(_require_data(cfg), cfg)
    labels = data.group.astype(str)
    for g in (ref, comp):
        if not np.any(labels == g):
            raise DataError(f"group {g!r} has no complete rows")
    data = data.subset((labels == ref) | (labels == comp))
    labels = data.group.astype(str)
    m_ref, m_comp = labels == ref, labels == comp
    functions = [FunctionSpec(ref, "edf", m_ref),
                 FunctionSpec(comp if comp != ref else f"{comp}'", "edf", m_comp),
                 FunctionSpec(f"{ref}|{comp}", "model", m_ref, m_comp)]
    pairs = [("raw", 0, 1), ("composition", 0, 2), ("unexplained", 2, 1)]
    rep = compute_bands(data, cfg, functions, pairs)
    rep.summary["dropped_rows"] = dropped
    rep.summary["groups"] = {"W": ref, "B": comp}
    return rep


def _as_list(v):
    return v if isinstance(v, list) else [v]


def sim_designs(cfg) -> List[SimDesign]:
    """Expand a simulation config into the cartesian sweep of designs."""
    params = cfg["params"]
    if not (isinstance(params, list) and params):
        raise ConfigError("params must be a nonempty list of [theta_0, theta_1]")
    if not isinstance(params[0], list):
        params = [params]
    extra = {}
    if cfg["cutoffs"] is not None:
        extra["cutoffs"] = tuple(float(c) for c in cfg["cutoffs"])
    designs = []
    try:
        for par, n, p in product(params, _as_list(cfg["n"]), _as_list(cfg["level"])):
            designs.append(SimDesign(
                family=str(cfg["family"]), params=tuple(float(v) for v in par),
                n=int(n), p=float(p), nsim=int(cfg["nsim"]), B=int(cfg["draws"]),
                prob_range=tuple(float(v) for v in cfg["prob_range"]),
                seed=int(cfg["seed"]), scheme=str(cfg["scheme"]),
                grid_mass=float(cfg["grid_mass"]),
                competitors=bool(cfg["competitors"]), **extra))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid simulation design: {exc}") from None
    return designs


SIM_COLUMNS = ["family", "param0", "param1", "n", "p", "nsim", "B",
               "cov_f0", "cov_f1", "cov_all", "cov_qe", "reject",
               "cov_boot", "cov_jitter1", "cov_jitter2",
               "len_new", "len_boot", "len_jitter1", "len_jitter2",
               "cov_f0_se", "cov_f1_se", "cov_all_se", "cov_qe_se", "reject_se",
               "len_new_se"]


def cmd_simulate(cfg) -> List[str]:
    """Run a sweep of simulation designs and write CSV plus JSON metadata."""
    designs = sim_designs(cfg)
    jobs = int(cfg["jobs"])
    if jobs < 1:
        raise ConfigError("jobs must be a positive integer")
    meta = _meta(cfg)
    rows, blocks = [], []
    for d in designs:
        log.info("simulating %s params=%s n=%d p=%g nsim=%d", d.family,
                 d.params, d.n, d.p, d.nsim)
        rep = run_design(d, n_jobs=jobs)
        log.info("design finished in %.1f s", rep.runtime)
        row = rep.row()
        rows.append([fmt(row[c]) if isinstance(row.get(c), (int, float)) else
                     ("" if c not in row else str(row[c])) for c in SIM_COLUMNS])
        block = report_metadata(rep)
        if not cfg["record_runtime"]:
            block.pop("runtime_seconds", None)
        blocks.append(block)
    out_dir = str(cfg["output"])
    paths = [os.path.join(out_dir, "simulation.csv"),
             os.path.join(out_dir, "simulation.json")]
    atomic_write(paths[0], _csv_text(meta, SIM_COLUMNS, rows))
    atomic_write(paths[1], _json_text({"meta": meta, "designs": blocks}) + "\n")
    return paths


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dqbands",
        description="Uniform confidence bands for distribution, quantile and "
                    "quantile-effect functions of discrete outcomes.")
    parser.add_argument("--version", action="version", version=f"dqbands {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--output", help="output directory")
        p.add_argument("--level", type=float, help="confidence level p")
        p.add_argument("--draws", type=int, help="bootstrap draws B")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--jobs", type=int, help="parallel workers")
        p.add_argument("-v", "--verbose", action="store_true")

    for name, helptext in (("bands", "bands for each group's DF, QF and QE"),
                           ("decompose", "bands for a counterfactual decomposition")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--data", help="input CSV file")
        p.add_argument("--link", choices=LINK_KINDS,
                       help="use distribution regression with this link")
        p.add_argument("--support", help="auto, none, or comma-separated values")
        p.add_argument("--grid", help="auto, lo:hi[:step], or comma-separated values")
        p.add_argument("--plots", action="store_true", help="also write SVG plots")
    p = sub.add_parser("simulate", help="Monte Carlo coverage and power study")
    common(p)
    p.add_argument("--record-runtime", action="store_true",
                   help="store wall-clock runtimes in the JSON metadata")
    return parser


def _overrides(args) -> Dict[str, object]:
    ov: Dict[str, object] = {"output": args.output, "draws": args.draws,
                             "seed": args.seed, "jobs": args.jobs}
    if args.command == "simulate":
        ov["level"] = None if args.level is None else [args.level]
        ov["record_runtime"] = True if args.record_runtime else None
        return ov
    ov.update(level=args.level, data=args.data,
              estimator=None if args.link is None else f"dr:{args.link}",
              support=None if args.support is None else parse_support_flag(args.support),
              grid=None if args.grid is None else parse_grid_flag(args.grid),
              plots=True if args.plots else None)
    return ov


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        defaults = SIM_DEFAULTS if args.command == "simulate" else BANDS_DEFAULTS
        cfg = load_config(args.config, defaults, _overrides(args))
        if args.command == "simulate":
            paths = cmd_simulate(cfg)
        else:
            rep = cmd_bands(cfg) if args.command == "bands" else cmd_decompose(cfg)
            paths = write_report(rep, cfg, str(cfg["output"]))
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (ConvergenceError, EstimatorError, AllPointsExcludedError,
            EmptyBandError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    for path in paths:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
