"""Gradient-free active-subspace estimation with sequentially re-rotated
kriging surrogates, and rare-event failure-probability estimation by
adaptive smoothed importance sampling in the learned subspace."""

from .gp import (
    GPHyperparams,
    GPModel,
    TrainConfig,
    TrainingError,
    fit_gp,
    kernel_eval,
    log_marginal_likelihood,
    posterior_mean,
    posterior_mean_grad,
    load_gp_model,
    save_gp_model,
)
from .subspace import (
    ASEstimate,
    RotationState,
    SeqOKASHistory,
    dominant_eigvecs,
    estimate_H,
    fsa,
    normalized_rmse,
    ok_as,
    seq_ok_as,
)
from .smoothing import (
    SmoothingConfig,
    estimate_H_eps,
    log_smooth_indicator,
    log_smooth_indicator_grad_factor,
    smooth_indicator,
)
from .rare_event import (
    EstimateRecord,
    ICEConfig,
    ISLevelState,
    LiftedGaussian,
    adapt_epsilon,
    ce_gaussian_fit,
    crude_mc,
    importance_sampling_estimate,
    lifted_gaussian,
    run_ice_seqokas,
    sn_weights,
)
from .problems import (
    Problem,
    linear_limit_state,
    make_problem,
    make_quadratic_ridge,
    quadratic_reliability,
)
from .harness import (
    ExperimentConfig,
    RegressionReport,
    ReliabilityMetrics,
    ReliabilityReport,
    reliability_metrics,
    rep_seed,
    run_regression_benchmark,
    run_reliability_study,
)

__version__ = "0.1.0"
