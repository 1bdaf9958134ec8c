"""Shared test utilities: quadrature oracles and small dataset builders."""

import numpy as np
from scipy.special import logsumexp

from mhss import Dataset, ModelKind, glm
from mhss.cli import generate_synthetic
from mhss.priors import FlatPrior


def logistic_dataset(n, d, seed=0):
    return generate_synthetic(n, d, ModelKind.logistic(), seed)[0]


def tiny_dataset(X, y, model=None):
    return Dataset(X=np.asarray(X, float), y=np.asarray(y, float),
                   model=model or ModelKind.logistic())


def grid_log_posterior(dataset, prior, thetas):
    """Unnormalized log posterior evaluated at a (m, d) array of points."""
    eta = dataset.X @ thetas.T                       # (n, m)
    model = dataset.model
    y = dataset.y[:, None]
    if model.variant == glm.LOGISTIC:
        ll = y * eta - np.logaddexp(0.0, eta)
    elif model.variant == glm.PROBIT:
        from scipy.special import log_ndtr

        ll = y * log_ndtr(eta) + (1.0 - y) * log_ndtr(-eta)
    else:
        z = eta + np.log(model.rate_scale)
        sp = np.logaddexp(0.0, z)
        ll = y * np.log(sp) - sp - dataset.log_y_factorial[:, None]
    out = ll.sum(axis=0)
    return out + np.array([prior.log_density(t) for t in thetas])


def quadrature_moments_1d(dataset, prior, center, half_width, num=4001):
    """Posterior mean and variance for d=1 by dense-grid quadrature."""
    grid = np.linspace(center - half_width, center + half_width, num)
    logp = grid_log_posterior(dataset, prior, grid[:, None])
    w = np.exp(logp - logsumexp(logp))
    mean = float(w @ grid)
    var = float(w @ (grid - mean) ** 2)
    return np.array([mean]), np.array([var])


def quadrature_moments_2d(dataset, prior, center, half_widths, num=401):
    """Posterior mean and variance per coordinate for d=2 by quadrature."""
    g0 = np.linspace(center[0] - half_widths[0], center[0] + half_widths[0], num)
    g1 = np.linspace(center[1] - half_widths[1], center[1] + half_widths[1], num)
    t0, t1 = np.meshgrid(g0, g1, indexing="ij")
    pts = np.column_stack([t0.ravel(), t1.ravel()])
    logp = grid_log_posterior(dataset, prior if prior else FlatPrior(), pts)
    w = np.exp(logp - logsumexp(logp))
    mean = w @ pts
    var = w @ (pts - mean) ** 2
    return mean, var


def central_diff(f, x, h):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def hybrid_rel_err(approx, exact, floor):
    """Relative error with an absolute floor for near-zero references."""
    approx = np.asarray(approx, float)
    exact = np.asarray(exact, float)
    return np.abs(approx - exact) / np.maximum(np.abs(exact), floor)
