"""Mode estimation and the proposal preconditioner.

Sampler exactness never depends on the quality of theta_hat; only the
subsample sizes and acceptance rates do. The full-data method therefore
aims for a tight gradient norm, while the stochastic method just has to
land in the right neighbourhood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import glm
from .glm import Dataset
from .priors import FlatPrior


class DivergenceError(RuntimeError):
    """Mode search iterates blew up; data or configuration is degenerate."""


@dataclass
class ModeFitConfig:
    method: str = "FullGradient"   # or "SGD"
    steps: int = 0                 # 0 means pick a default from n
    minibatch: int = 128
    step0: float = 0.5
    decay: float = 0.0             # 0 means pick so the final step is step0/100
    seed: int = 0
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.method not in ("SGD", "FullGradient"):
            raise ValueError("method must be 'SGD' or 'FullGradient'")


def log_posterior_grad(dataset: Dataset, prior, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    dh = np.asarray(glm.dh(dataset.model, dataset.X @ theta, dataset.y))
    return dataset.X.T @ dh + prior.grad(theta)


def hessian_at(dataset: Dataset, prior, theta_hat) -> np.ndarray:
    """Hessian of the log posterior at theta_hat (negative definite for
    the supported, log-concave models on non-degenerate designs)."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    d2 = np.asarray(glm.d2h(dataset.model, dataset.X @ theta_hat, dataset.y))
    H = (dataset.X * d2[:, None]).T @ dataset.X + prior.hessian(dataset.d)
    return 0.5 * (H + H.T)


def _chol_spd(A: np.ndarray) -> np.ndarray:
    """Cholesky with escalating jitter, for nearly singular designs."""
    base = np.trace(A) / A.shape[0]
    jitter = 1e-10
    while jitter <= 1e-4:
        try:
            return np.linalg.cholesky(A + jitter * base * np.eye(A.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError(
        "matrix not positive definite even after jitter; degenerate design"
    )


def preconditioner(H: np.ndarray):
    """V_d = -H^{-1} and its lower Cholesky factor."""
    A = -np.asarray(H, dtype=float)
    A = 0.5 * (A + A.T)
    L = _chol_spd(A)
    inv_L = np.linalg.inv(L)
    V = inv_L.T @ inv_L
    V = 0.5 * (V + V.T)
    return V, _chol_spd(V)


def _newton(dataset: Dataset, prior, config: ModeFitConfig) -> np.ndarray:
    theta = np.zeros(dataset.d)
    max_iters = max(200, config.steps)
    for _ in range(max_iters):
        g = log_posterior_grad(dataset, prior, theta)
        if np.linalg.norm(g) <= config.tolerance:
            return theta
        H = hessian_at(dataset, prior, theta)
        L = _chol_spd(-H)
        step = np.linalg.solve(L.T, np.linalg.solve(L, g))
        # halve until the gradient norm improves; log-concavity makes
        # the full Newton step safe almost always
        t = 1.0
        g_norm = np.linalg.norm(g)
        for _ in range(40):
            cand = theta + t * step
            if np.linalg.norm(log_posterior_grad(dataset, prior, cand)) < g_norm:
                theta = cand
                break
            t *= 0.5
        else:
            theta = theta + step
        if np.linalg.norm(theta) > 1e8:
            raise DivergenceError("mode search diverged (flat direction in the posterior?)")
    if np.linalg.norm(log_posterior_grad(dataset, prior, theta)) > config.tolerance:
        raise DivergenceError("mode search did not reach the gradient tolerance")
    return theta


def _sgd(dataset: Dataset, prior, config: ModeFitConfig) -> np.ndarray:
    n = dataset.n
    m = min(config.minibatch, n)
    steps = config.steps if config.steps > 0 else max(1, int(50 * n / m))
    decay = config.decay if config.decay > 0 else 99.0 / steps
    rng = np.random.default_rng(config.seed)
    theta = np.zeros(dataset.d)
    for t in range(steps):
        idx = rng.integers(0, n, size=m)
        eta = dataset.X[idx] @ theta
        dh = np.asarray(glm.dh(dataset.model, eta, dataset.y[idx]))
        grad = dataset.X[idx].T @ dh / m + prior.grad(theta) / n
        theta = theta + config.step0 / (1.0 + decay * t) * grad
        if np.linalg.norm(theta) > 1e8:
            raise DivergenceError("stochastic mode search diverged")
    return theta


def fit_mode(dataset: Dataset, config: ModeFitConfig | None = None, prior=None) -> np.ndarray:
    """Estimate theta_hat near the posterior mode."""
    if config is None:
        config = ModeFitConfig()
    if prior is None:
        prior = FlatPrior()
    if config.method == "FullGradient":
        return _newton(dataset, prior, config)
    return _sgd(dataset, prior, config)
