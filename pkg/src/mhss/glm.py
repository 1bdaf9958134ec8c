"""Likelihood terms for the three supported regression models.

Each observation contributes h(eta; y) to the log likelihood, where
eta = x . theta is the linear predictor. This module provides h and its
first two derivatives in numerically stable form, together with the
per-observation envelope constants used by the remainder bounds:
curvature_bound(y) dominates |h''| everywhere and third_bound(y)
dominates |h'''|.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln, log_ndtr

LOGISTIC = "logistic"
PROBIT = "probit"
POISSON_SOFTPLUS = "poisson-softplus"

_VARIANTS = (LOGISTIC, PROBIT, POISSON_SOFTPLUS)

# sqrt(3)/18, the sharp envelope of |h'''| for the logistic model
LOGISTIC_THIRD_BOUND = np.sqrt(3.0) / 18.0


class UnsupportedModelError(ValueError):
    """Raised when an operation is undefined for the requested model."""


@dataclass(frozen=True)
class ModelKind:
    """Which regression likelihood to use.

    rate_scale enters only the softplus-Poisson model, whose mean is
    log(1 + rate_scale * exp(eta)); the other variants ignore it.
    """

    variant: str
    rate_scale: float = 1.0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown model variant: {self.variant!r}")
        if not (self.rate_scale > 0):
            raise ValueError("rate_scale must be positive")

    @classmethod
    def logistic(cls) -> "ModelKind":
        return cls(LOGISTIC)

    @classmethod
    def probit(cls) -> "ModelKind":
        return cls(PROBIT)

    @classmethod
    def poisson(cls, rate_scale: float = 1.0) -> "ModelKind":
        return cls(POISSON_SOFTPLUS, rate_scale)


def _check_response(model: ModelKind, y: np.ndarray):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("responses must be finite")
    if model.variant in (LOGISTIC, PROBIT):
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError(f"{model.variant} responses must be 0 or 1")
    else:
        if not np.all((y >= 0.0) & (y == np.floor(y))):
            raise ValueError("poisson responses must be nonnegative integers")
    return y


@dataclass
class Dataset:
    """Covariate matrix X (n x d), response vector y (n) and model kind."""

    X: np.ndarray
    y: np.ndarray
    model: ModelKind
    # log(y!) is constant in theta; precomputed once for the Poisson model
    log_y_factorial: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        n, d = self.X.shape
        if n < 1 or d < 1:
            raise ValueError("need n >= 1 and d >= 1")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("covariates must be finite")
        self.y = _check_response(self.model, self.y)
        if self.y.shape != (n,):
            raise ValueError("y must have one entry per row of X")
        if self.model.variant == POISSON_SOFTPLUS:
            self.log_y_factorial = gammaln(self.y + 1.0)
        else:
            self.log_y_factorial = np.zeros(n)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def linear_predictor(x_row, theta) -> float:
    """eta = x . theta."""
    x_row = np.asarray(x_row, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if x_row.shape != theta.shape:
        raise ValueError("dimension mismatch between covariate row and theta")
    return float(x_row @ theta)


def _softplus(eta):
    # log(1 + exp(eta)), stable on both tails
    return np.logaddexp(0.0, eta)


def _mills(eta):
    # phi(eta) / Phi(eta), stable far into the lower tail
    log_pdf = -0.5 * eta * eta - 0.5 * np.log(2.0 * np.pi)
    return np.exp(log_pdf - log_ndtr(eta))


# Coefficient helpers for the softplus-Poisson model. With p = expit(eta)
# and sp = softplus(eta):
#   h'(eta)  = y * S(eta) - p,            S = p / sp
#   -h''(eta) = p (1 - p) + y * S(eta) * R(eta),   R = S - expit(-eta)
# S -> 1 and R -> exp(eta)/2 as eta -> -inf; series branch avoids the
# 0/0 and catastrophic cancellation there.
_POIS_TAIL = -33.0


def _pois_S(eta):
    p = expit(eta)
    sp = _softplus(eta)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(eta < _POIS_TAIL, 1.0, p / np.where(sp > 0, sp, 1.0))
    return s


def _pois_R(eta):
    r = _pois_S(eta) - expit(-eta)
    return np.where(eta < _POIS_TAIL, 0.5 * np.exp(eta), r)


def _shifted(model: ModelKind, eta):
    if model.variant == POISSON_SOFTPLUS and model.rate_scale != 1.0:
        return eta + np.log(model.rate_scale)
    return eta


def loglik_term(model: ModelKind, eta, y):
    """h(eta; y), finite for any finite eta; vectorizes over eta and y."""
    eta = np.asarray(eta, dtype=float)
    y = _check_response(model, y)
    if model.variant == LOGISTIC:
        out = y * eta - _softplus(eta)
    elif model.variant == PROBIT:
        out = y * log_ndtr(eta) + (1.0 - y) * log_ndtr(-eta)
    else:
        z = _shifted(model, eta)
        sp = _softplus(z)
        out = y * np.log(sp) - sp - gammaln(y + 1.0)
    return out if out.ndim else float(out)


def dh(model: ModelKind, eta, y):
    """First derivative h'(eta; y)."""
    eta = np.asarray(eta, dtype=float)
    y = _check_response(model, y)
    if model.variant == LOGISTIC:
        out = y - expit(eta)
    elif model.variant == PROBIT:
        out = y * _mills(eta) - (1.0 - y) * _mills(-eta)
    else:
        z = _shifted(model, eta)
        out = y * _pois_S(z) - expit(z)
    return out if out.ndim else float(out)


def d2h(model: ModelKind, eta, y):
    """Second derivative h''(eta; y); negative for all supported models."""
    eta = np.asarray(eta, dtype=float)
    y = _check_response(model, y)
    if model.variant == LOGISTIC:
        p = expit(eta)
        out = -p * (1.0 - p)
    elif model.variant == PROBIT:
        g_pos = _mills(eta)
        g_neg = _mills(-eta)
        out = -(y * g_pos * (g_pos + eta) + (1.0 - y) * g_neg * (g_neg - eta))
    else:
        z = _shifted(model, eta)
        p = expit(z)
        out = -(p * (1.0 - p) + y * _pois_S(z) * _pois_R(z))
    return out if out.ndim else float(out)


def curvature_bound(model: ModelKind, y):
    """M(y): a global bound on |h''(eta; y)| over eta."""
    y = _check_response(model, y)
    if model.variant == LOGISTIC:
        out = np.full_like(y, 0.25)
    elif model.variant == PROBIT:
        out = np.ones_like(y)
    else:
        out = 0.25 + 0.168 * y
    return out if out.ndim else float(out)


def third_bound(model: ModelKind, y):
    """L(y): a global bound on |h'''(eta; y)| over eta.

    The probit value 0.3 and the response-linear Poisson growth are
    empirical envelopes checked on a fine grid rather than proved.
    """
    y = _check_response(model, y)
    if model.variant == LOGISTIC:
        out = np.full_like(y, LOGISTIC_THIRD_BOUND)
    elif model.variant == PROBIT:
        out = np.full_like(y, 0.3)
    else:
        out = LOGISTIC_THIRD_BOUND + 0.061 * y
    return out if out.ndim else float(out)


def first_deriv_bound(model: ModelKind, y):
    """Global bound on |h'(eta; y)|, used by the no-control-variate bound.

    The probit first derivative is unbounded in eta, so that model is
    rejected here.
    """
    y = _check_response(model, y)
    if model.variant == LOGISTIC:
        out = np.ones_like(y)
    elif model.variant == POISSON_SOFTPLUS:
        out = np.maximum(1.0, y)
    else:
        raise UnsupportedModelError(
            "the probit first derivative is unbounded; no Lipschitz constant exists"
        )
    return out if out.ndim else float(out)


def grad_term(x_row, theta, model: ModelKind, y):
    """Per-observation gradient x * h'(eta)."""
    x_row = np.asarray(x_row, dtype=float)
    eta = linear_predictor(x_row, theta)
    return x_row * dh(model, eta, y)


def hess_term(x_row, theta, model: ModelKind, y):
    """Per-observation Hessian x x^T * h''(eta)."""
    x_row = np.asarray(x_row, dtype=float)
    eta = linear_predictor(x_row, theta)
    return np.outer(x_row, x_row) * d2h(model, eta, y)


def loglik_terms(dataset: Dataset, theta, idx=None) -> np.ndarray:
    """Vector of h(x_i . theta; y_i) for the selected rows (all by default)."""
    theta = np.asarray(theta, dtype=float)
    if idx is None:
        X, y = dataset.X, dataset.y
    else:
        X, y = dataset.X[idx], dataset.y[idx]
    eta = X @ theta
    model = dataset.model
    if model.variant == LOGISTIC:
        return y * eta - _softplus(eta)
    if model.variant == PROBIT:
        return y * log_ndtr(eta) + (1.0 - y) * log_ndtr(-eta)
    z = _shifted(model, eta)
    sp = _softplus(z)
    lyf = dataset.log_y_factorial if idx is None else dataset.log_y_factorial[idx]
    return y * np.log(sp) - sp - lyf


def loglik_sum(dataset: Dataset, theta) -> float:
    """Full-data log likelihood at theta."""
    return float(np.sum(loglik_terms(dataset, theta)))


def dh_vector(dataset: Dataset, theta) -> np.ndarray:
    """h'(x_i . theta; y_i) for every observation."""
    return np.asarray(dh(dataset.model, dataset.X @ np.asarray(theta, float), dataset.y))


def d2h_vector(dataset: Dataset, theta) -> np.ndarray:
    """h''(x_i . theta; y_i) for every observation."""
    return np.asarray(d2h(dataset.model, dataset.X @ np.asarray(theta, float), dataset.y))
