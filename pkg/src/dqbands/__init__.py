"""Uniform confidence bands for the distribution and quantile functions of
discrete outcomes, and for quantile effects."""

__version__ = "0.1.0"

from .core import (DFBand, Grid, IncompatibleGridError, MonotoneStepFn,
                   ProbGrid, QEBand, QuantileBand, breakpoint_probs, covers,
                   left_inverse, right_inverse)
from .shape import (clip_unit, intersect_monotone, isotonize, rearrange, shape,
                    shape_fn)
from .resample import (BootstrapConfig, BootstrapDraws, EstimatorError,
                       bootstrap_dfs, draw_weights, weight_matrix)
from .bandcalc import (AllPointsExcludedError, EmptyBandError, EqualityTest,
                       JointBands, critical_value, df_band_single,
                       df_bands_joint, invert_band, minkowski_interval,
                       minkowski_set, qe_band, ratio_band, restrict_support,
                       robust_se, test_equality)
from .estimate import (ConvergenceError, Dataset, DesignSpec, DRFit,
                       LinkFunction, counterfactual, counterfactual_shift,
                       decomposition_triplet, dr_fit, dr_predict, edf,
                       fit_binary, poisson_cdf, poisson_fit)
from .simlab import SimDesign, SimReport, run_design, run_replication

__all__ = [
    "DFBand",
    "Grid",
    "IncompatibleGridError",
    "MonotoneStepFn",
    "ProbGrid",
    "QEBand",
    "QuantileBand",
    "breakpoint_probs",
    "covers",
    "left_inverse",
    "right_inverse",
    "shape",
    "clip_unit",
    "intersect_monotone",
    "isotonize",
    "rearrange",
    "shape_fn",
    "BootstrapConfig",
    "BootstrapDraws",
    "EstimatorError",
    "bootstrap_dfs",
    "draw_weights",
    "weight_matrix",
    "AllPointsExcludedError",
    "EmptyBandError",
    "EqualityTest",
    "JointBands",
    "critical_value",
    "df_band_single",
    "df_bands_joint",
    "invert_band",
    "minkowski_interval",
    "minkowski_set",
    "qe_band",
    "ratio_band",
    "restrict_support",
    "robust_se",
    "test_equality",
    "ConvergenceError",
    "Dataset",
    "DesignSpec",
    "DRFit",
    "LinkFunction",
    "counterfactual",
    "counterfactual_shift",
    "decomposition_triplet",
    "dr_fit",
    "dr_predict",
    "edf",
    "fit_binary",
    "poisson_cdf",
    "poisson_fit",
    "SimDesign",
    "SimReport",
    "run_design",
    "run_replication",
]
