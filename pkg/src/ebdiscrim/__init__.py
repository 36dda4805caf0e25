"""Partially identified empirical Bayes inference for paired-binomial callback data."""
from .conic import Status
from .estimands import (
    OddsRatioSpec,
    RatioEstimand,
    discr_estimand,
    evaluate,
    logit_estimand,
    make_estimand,
    neq_estimand,
    odds_estimand,
    odds_limit,
    pdiscr_estimand,
)
from .exceptions import DomainError, SolverError, UndefinedEstimandError, ValidationError
from .gmm import BootstrapResult, GmmFit, bootstrap_jopt, default_weighting, j_stat, kappa_quantile, project
from .ingest import Dataset, empirical_pmf, load_csv, simulate, write_csv
from .model import (
    ExperimentDesign,
    Grid,
    LikelihoodMatrix,
    binom_pmf,
    build_grid,
    likelihood,
    likelihood_matrix,
    marginal,
)

__version__ = "0.1.0"
