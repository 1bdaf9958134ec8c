"""MCMC step functions and the chain driver.

All samplers share the preconditioned random-walk proposal
theta' ~ N(theta, (lambda^2 / d) V_d). The two-stage samplers first
screen a proposal with the cheap aggregate control-variate ratio
(stage 1) and only then pay for a data-dependent correction (stage 2):
a thinned-subsample ratio for the main algorithm, sequential per-index
flags for the SMH baseline, or the full likelihood when the expected
subsample would exceed n anyway.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cv as cvmod
from . import glm, modefit
from .bounds import MHSS, SMH, TUNA, BoundSpec, bound_terms
from .cv import CvCache
from .glm import Dataset
from .priors import FlatPrior
from .thinning import BoundViolationError, alias_for, draw_subsample, stage2_log_ratio

ALGORITHMS = ("RWM", "MHSS1", "MHSS2", "SMH1", "SMH2", "SMH1NB", "SMH2NB", "TUNA")

_SPECS = {
    "MHSS1": BoundSpec(MHSS, 1),
    "MHSS2": BoundSpec(MHSS, 2),
    "SMH1": BoundSpec(SMH, 1),
    "SMH2": BoundSpec(SMH, 2),
    "SMH1NB": BoundSpec(MHSS, 1),
    "SMH2NB": BoundSpec(MHSS, 2),
    "TUNA": BoundSpec(TUNA),
}

_DEFAULT_LAMBDA = {
    "RWM": 2.38,
    "MHSS1": 1.5,
    "MHSS2": 1.5,
    "SMH1": 1.0,
    "SMH2": 2.0,
    "SMH1NB": 0.5,
    "SMH2NB": 1.5,
    "TUNA": 0.05,
}


def default_lambda(algorithm: str) -> float:
    return _DEFAULT_LAMBDA[algorithm]


@dataclass
class Proposal:
    """Random-walk proposal N(theta, (scale^2 / d) V_d)."""

    scale: float
    V_d: np.ndarray
    chol_factor: np.ndarray  # lower Cholesky of (scale^2 / d) V_d


def make_proposal(scale: float, V_d: np.ndarray) -> Proposal:
    if scale <= 0:
        raise ValueError("scale must be positive")
    V_d = np.asarray(V_d, dtype=float)
    d = V_d.shape[0]
    L = np.linalg.cholesky(V_d)
    return Proposal(scale=scale, V_d=V_d, chol_factor=(scale / np.sqrt(d)) * L)


def propose(rng, proposal: Proposal, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return theta + proposal.chol_factor @ rng.standard_normal(theta.shape[0])


@dataclass
class ChainConfig:
    algorithm: str
    lam: float = 0.0               # 0 picks the per-algorithm default
    gamma: float = 0.0             # thinning interpolation; only the MHSS variants use it
    iterations: int = 10_000
    burn_in: int = 0
    seed: int = 0
    chi: float = 0.0               # tuna stabilizer
    prior: object = field(default_factory=FlatPrior)
    init: object = "at-mode"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.lam == 0.0:
            self.lam = default_lambda(self.algorithm)
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")
        if self.iterations < 0 or self.burn_in < 0 or self.burn_in > self.iterations:
            raise ValueError("need 0 <= burn_in <= iterations")
        if self.chi < 0:
            raise ValueError("chi must be nonnegative")


@dataclass
class ChainOutput:
    samples: np.ndarray            # (iterations - burn_in, d)
    accept_flags: np.ndarray       # per iteration, burn-in included
    stage1_pass_flags: np.ndarray
    batch_sizes: np.ndarray        # raw B; n on full-data steps; 0 on stage-1 reject
    wall_time_seconds: float
    full_data_count: int
    burn_in: int
    algorithm: str


def log_posterior(dataset: Dataset, prior, theta) -> float:
    return prior.log_density(theta) + glm.loglik_sum(dataset, theta)


def log_alpha1(cache: CvCache, prior, theta, theta_prime, order: int) -> float:
    """Stage-1 log acceptance: prior ratio plus the aggregate control
    variate; the symmetric proposal's q-ratio cancels."""
    lp = prior.log_density(theta_prime) - prior.log_density(theta)
    return min(0.0, lp + cvmod.r_total(cache, theta, theta_prime, order))


def _accept(rng, log_ratio: float) -> bool:
    if log_ratio >= 0.0:
        return True
    return np.log(rng.random()) < log_ratio


def _mhss_step(rng, theta, dataset, cache, prior, proposal, spec, gamma):
    theta_prime = propose(rng, proposal, theta)
    la1 = log_alpha1(cache, prior, theta, theta_prime, spec.order)
    if not _accept(rng, la1):
        return theta, False, False, 0, False

    c, M = bound_terms(spec, cache, dataset, theta, theta_prime)
    C = alias_for(cache, spec).total_weight
    if C * M >= dataset.n:
        # expected subsample at least n: cheaper to correct on the full data
        la2 = (
            glm.loglik_sum(dataset, theta_prime)
            - glm.loglik_sum(dataset, theta)
            - cvmod.r_total(cache, theta, theta_prime, spec.order)
        )
        if _accept(rng, min(0.0, la2)):
            return theta_prime, True, True, dataset.n, True
        return theta, False, True, dataset.n, True

    sub = draw_subsample(rng, cache, dataset, theta, theta_prime, spec, gamma)
    la2 = stage2_log_ratio(sub)
    if _accept(rng, min(0.0, la2)):
        return theta_prime, True, True, sub.raw_count, False
    return theta, False, True, sub.raw_count, False


_SMH_CHUNK = 512


def _smh_step(rng, theta, dataset, cache, prior, proposal, spec):
    theta_prime = propose(rng, proposal, theta)
    la1 = log_alpha1(cache, prior, theta, theta_prime, spec.order)
    if not _accept(rng, la1):
        return theta, False, False, 0

    c, M = bound_terms(spec, cache, dataset, theta, theta_prime)
    if M <= 0.0:
        return theta_prime, True, True, 0
    table = alias_for(cache, spec)
    B = int(rng.poisson(table.total_weight * M))
    if B == 0:
        return theta_prime, True, True, 0

    idx = table.sample(rng, B)
    u = rng.random(B)
    examined = 0
    for start in range(0, B, _SMH_CHUNK):
        chunk = idx[start : start + _SMH_CHUNK]
        uniq, inverse = np.unique(chunk, return_inverse=True)
        delta = cvmod.delta_for_indices(cache, dataset, uniq, theta, theta_prime, spec.cv_order)
        cm = c[uniq] * M
        if np.any(np.abs(delta) > cm * (1.0 + 1e-9)):
            j = int(np.argmax(np.abs(delta) - cm))
            raise BoundViolationError(
                f"|Delta| = {abs(delta[j]):.6g} exceeds bound c*M = {cm[j]:.6g} "
                f"at index {int(uniq[j])}"
            )
        # flag probability per examined index; any flag rejects the proposal
        p = np.maximum(0.0, delta) / np.where(cm > 0, cm, 1.0)
        flags = u[start : start + chunk.size] < p[inverse]
        hit = np.argmax(flags) if flags.any() else -1
        if hit >= 0:
            examined += int(hit) + 1
            return theta, False, True, examined
        examined += chunk.size
    return theta_prime, True, True, examined


def _tuna_step(rng, theta, dataset, cache, prior, proposal, spec, chi):
    theta_prime = propose(rng, proposal, theta)
    _, M = bound_terms(spec, cache, dataset, theta, theta_prime)
    C = alias_for(cache, spec).total_weight
    extra = chi * C * M * M
    sub = draw_subsample(
        rng, cache, dataset, theta, theta_prime, spec, gamma=0.5,
        extra_rate_per_unit_c=extra,
    )
    lp = prior.log_density(theta_prime) - prior.log_density(theta)
    la = min(0.0, lp + stage2_log_ratio(sub))
    if _accept(rng, la):
        return theta_prime, True, True, sub.raw_count
    return theta, False, True, sub.raw_count


def _rwm_step(rng, theta, cur_ll, dataset, prior, proposal):
    theta_prime = propose(rng, proposal, theta)
    ll_prime = glm.loglik_sum(dataset, theta_prime)
    la = min(
        0.0,
        prior.log_density(theta_prime) - prior.log_density(theta) + ll_prime - cur_ll,
    )
    if _accept(rng, la):
        return theta_prime, ll_prime, True
    return theta, cur_ll, False


def run_chain(dataset: Dataset, cache: CvCache | None, config: ChainConfig,
              V_d: np.ndarray | None = None) -> ChainOutput:
    """Run one chain; deterministic given the config seed.

    The preconditioner defaults to minus the inverse Hessian at
    theta_hat, assembled from the cache's Hessian sum. A cache is
    required for every algorithm except RWM, where it is optional and
    used only for the proposal and the starting point.
    """
    if cache is None:
        if config.algorithm != "RWM" or (V_d is None or config.init == "at-mode"):
            raise ValueError("a control-variate cache is required")
    prior = config.prior
    if V_d is None:
        H = cache.sum_H + prior.hessian(dataset.d)
        V_d, _ = modefit.preconditioner(H)
    proposal = make_proposal(config.lam, V_d)

    if isinstance(config.init, str):
        if config.init != "at-mode":
            raise ValueError("init must be 'at-mode' or a coefficient vector")
        theta = cache.theta_hat.copy()
    else:
        theta = np.asarray(config.init, dtype=float).copy()
        if theta.shape != (dataset.d,):
            raise ValueError("init vector has the wrong length")

    rng = np.random.Generator(np.random.Philox(config.seed))
    algo = config.algorithm
    spec = _SPECS.get(algo)
    iters = config.iterations
    keep = iters - config.burn_in

    samples = np.empty((keep, dataset.d))
    accept_flags = np.zeros(iters, dtype=bool)
    stage1_flags = np.zeros(iters, dtype=bool)
    batch_sizes = np.zeros(iters, dtype=np.int64)
    full_data_count = 0

    cur_ll = glm.loglik_sum(dataset, theta) if algo == "RWM" else 0.0

    start = time.perf_counter()
    for t in range(iters):
        try:
            if algo == "RWM":
                theta, cur_ll, accepted = _rwm_step(rng, theta, cur_ll, dataset, prior, proposal)
                stage1, batch = True, dataset.n
            elif algo in ("MHSS1", "MHSS2"):
                theta, accepted, stage1, batch, full = _mhss_step(
                    rng, theta, dataset, cache, prior, proposal, spec, config.gamma
                )
                full_data_count += full
            elif algo == "TUNA":
                theta, accepted, stage1, batch = _tuna_step(
                    rng, theta, dataset, cache, prior, proposal, spec, config.chi
                )
            else:
                theta, accepted, stage1, batch = _smh_step(
                    rng, theta, dataset, cache, prior, proposal, spec
                )
        except BoundViolationError as exc:
            raise BoundViolationError(f"iteration {t}: {exc}") from exc
        accept_flags[t] = accepted
        stage1_flags[t] = stage1
        batch_sizes[t] = batch
        if t >= config.burn_in:
            samples[t - config.burn_in] = theta
    wall = time.perf_counter() - start

    return ChainOutput(
        samples=samples,
        accept_flags=accept_flags,
        stage1_pass_flags=stage1_flags,
        batch_sizes=batch_sizes,
        wall_time_seconds=wall,
        full_data_count=full_data_count,
        burn_in=config.burn_in,
        algorithm=algo,
    )
