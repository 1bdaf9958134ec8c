"""Exact subsampling MCMC for GLM posteriors.

Random-walk Metropolis with Poisson-thinned subsample corrections,
control variates around a mode estimate, and tight per-model remainder
bounds, plus the SMH and TunaMH baselines and chain diagnostics.
"""

from .bounds import MHSS, SMH, TUNA, BoundSpec, bound_terms, dk_factor, mhss_bound_factor, omega_of, smh_bound, tuna_bound
from .cv import CvCache, build_cache, delta_i, load_cache, r_i, r_total, save_cache
from .diag import ChainMetrics, batch_means_se, efficiency_curve, ess, msjd, optimal_lambda, summarize
from .glm import (
    LOGISTIC,
    POISSON_SOFTPLUS,
    PROBIT,
    Dataset,
    ModelKind,
    UnsupportedModelError,
    curvature_bound,
    d2h,
    dh,
    first_deriv_bound,
    grad_term,
    hess_term,
    linear_predictor,
    loglik_sum,
    loglik_term,
    third_bound,
)
from .modefit import ModeFitConfig, fit_mode, hessian_at, preconditioner
from .priors import FlatPrior, GaussianIsoPrior
from .samplers import (
    ALGORITHMS,
    ChainConfig,
    ChainOutput,
    Proposal,
    default_lambda,
    log_alpha1,
    log_posterior,
    make_proposal,
    propose,
    run_chain,
)
from .thinning import AliasTable, BoundViolationError, Subsample, build_alias, draw_subsample, phi, stage2_log_ratio

__version__ = "0.1.0"
