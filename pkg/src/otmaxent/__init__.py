"""Maximum-entropy reweighting under Wasserstein-2 constraints."""

from .distributions import MAX_SKEWNESS, Normal, SkewNormal, skew_normal_from_moments
from ._solver import SolverConfig
from .transport import (
    QuadratureConfig,
    WeightedSample,
    grad_w2sq_weights,
    w2sq_discrete_continuous,
    w2sq_discrete_discrete,
)
from .reweight import MaxEntropyReweighter, entropy, solve_dual, solve_primal
from .survey import (
    BdcmFit,
    EstimatingFunction,
    PmleFit,
    SimulationConfig,
    SurveySample,
    bdcm_fit,
    bdcm_loglik,
    etel,
    logistic_score,
    mean_deviation,
    mle_fit,
    pmle_fit,
    simulate_population,
    wfpbb_resample,
)
from .fairness import (
    FairDataset,
    FairFit,
    FairRegression,
    fit_in_model,
    fit_two_step,
    fit_unconstrained,
    predict_fair,
    synth_fair_data,
)
from .portfolio import (
    EntropyTransportPortfolio,
    MeanVariancePortfolio,
    PortfolioResult,
    PortfolioStats,
    ReturnMatrix,
    entropy_w2_portfolio,
    mv_sweep,
    mv_weights,
    portfolio_stats,
    sweep_lambda,
    synthetic_returns,
    target_from_mv,
)
from .exceptions import ConvergenceError, FitError, InfeasibilityError, OtmaxentError

__version__ = "0.1.0"

__all__ = [
    "BdcmFit",
    "ConvergenceError",
    "EntropyTransportPortfolio",
    "EstimatingFunction",
    "FairDataset",
    "FairFit",
    "FairRegression",
    "FitError",
    "InfeasibilityError",
    "MAX_SKEWNESS",
    "MaxEntropyReweighter",
    "MeanVariancePortfolio",
    "Normal",
    "OtmaxentError",
    "PmleFit",
    "PortfolioResult",
    "PortfolioStats",
    "QuadratureConfig",
    "ReturnMatrix",
    "SimulationConfig",
    "SkewNormal",
    "SolverConfig",
    "SurveySample",
    "WeightedSample",
    "bdcm_fit",
    "bdcm_loglik",
    "entropy",
    "entropy_w2_portfolio",
    "etel",
    "fit_in_model",
    "fit_two_step",
    "fit_unconstrained",
    "grad_w2sq_weights",
    "logistic_score",
    "mean_deviation",
    "mle_fit",
    "mv_sweep",
    "mv_weights",
    "pmle_fit",
    "portfolio_stats",
    "predict_fair",
    "simulate_population",
    "skew_normal_from_moments",
    "solve_dual",
    "solve_primal",
    "sweep_lambda",
    "synth_fair_data",
    "synthetic_returns",
    "target_from_mv",
    "w2sq_discrete_continuous",
    "w2sq_discrete_discrete",
    "wfpbb_resample",
    "__version__",
]
