"""Median-of-means estimation, robust Lasso, estimator selection and
robust M-estimator selection for i.i.d. and mixing data."""

from .blocks import (
    CONSTANTS,
    AbsoluteConstants,
    BlockPartition,
    RobustMeanResult,
    block_means,
    check_variance_condition,
    choose_block_count,
    make_regular_partition,
    mean_half_width,
    median,
    robust_mean,
    variance_upper_bound,
)
from .dictionary import (
    CoherenceStats,
    Dictionary,
    LassoHypotheses,
    build_custom_dictionary,
    build_histogram_dictionary,
    build_polynomial_dictionary,
    build_trigonometric_dictionary,
    check_dictionary_condition,
    check_lasso_hypotheses,
    coherence_stats,
)
from .errors import *  # noqa: F401,F403
from .experiments import ExperimentReport, run_coverage_experiment
from .generators import GeneratorSpec, generate
from .lasso import LassoFit, LassoProblem, lasso_criterion, lasso_remainder, lasso_weights, solve_lasso
from .mestimation import (
    BlockEstimate,
    ContrastModel,
    MarginParams,
    SelectorTrace,
    contrast_kullback_histogram,
    contrast_l2_density,
    contrast_l2_regression,
    histogram_contrast,
    pairwise_median_loss,
    rate_quantities,
    select_m_estimator,
)
from .mixing import (
    MixingCoefficients,
    MixingLayout,
    ar1_mixing_coefficients,
    make_mixing_layout,
    mixing_rate_quantities,
    robust_mean_mixing,
    select_m_estimator_mixing,
)
from .selection import (
    L0,
    CandidateEstimator,
    ModelSpec,
    SelectionResult,
    classical_criterion,
    classical_penalty,
    robust_criterion,
    robust_penalty,
    select,
)

__version__ = "0.1.0"
