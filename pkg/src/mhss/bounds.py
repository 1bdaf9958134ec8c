"""Global factors M(theta, theta') for the remainder bounds.

Three families are supported. The control-variate family splits each
bound into a per-observation weight c_i (held in the cache) and a
shared factor M computed once per proposal:

  order 1:  |Delta_i| <= ||x_i||^2 M(y_i) * ||t-||
                         * max(||theta - th||  D1(w), ||theta' - th|| D1(w'))
  order 2:  |Delta_i| <= ||x_i||^3 L(y_i) * (||t-|| / 2)
                         * (||t-||^2 / 6 + ||theta - th||^2 D2(w)
                            + ||theta' - th||^2 D2(w'))

with t- = theta' - theta, th = theta_hat, and D_k the angle-dependent
sharpening of the Cauchy-Schwarz inequality below. The SMH family uses
l1-norm factors with max-coordinate weights, and the tuna family bounds
the raw log-likelihood difference by a Lipschitz constant times the
step length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cv import CvCache, weight_vector
from .glm import Dataset

MHSS = "mhss"
SMH = "smh"
TUNA = "tuna"


@dataclass(frozen=True)
class BoundSpec:
    """Which remainder-bound family is active, and the expansion order."""

    family: str
    order: int = 1

    def __post_init__(self):
        if self.family not in (MHSS, SMH, TUNA):
            raise ValueError(f"unknown bound family: {self.family!r}")
        if self.family != TUNA and self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")

    @property
    def cv_order(self) -> int:
        """Control-variate order fed to the remainder; 0 disables it."""
        return 0 if self.family == TUNA else self.order


def dk_factor(k: int, omega: float) -> float:
    """Sharpening factor D_k(omega) in (0, 1].

    For unit vectors u, v with |cos angle| = |omega|,
    |u.x|^k |v.x| <= D_k(omega) ||x||^(k+1). D_k(1) = 1 recovers plain
    Cauchy-Schwarz; orthogonal vectors gain roughly a factor
    exp(-1/2)/sqrt(k).
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    w = abs(float(omega))
    if w > 1.0 + 1e-9:
        raise ValueError("omega must lie in [-1, 1]")
    w = min(w, 1.0)
    ck = np.sqrt(k + 0.25 * (k - 1) ** 2 * w * w) - 0.5 * (k - 1) * w
    return float((k + w * ck) ** ((k + 1) / 2.0) / (ck * (k + 1) ** ((k + 1) / 2.0)))


def omega_of(u, v) -> float:
    """Cosine of the angle between u and v, clamped to [-1, 1].

    A degenerate (essentially zero) vector returns 0; callers only use
    that value multiplied by the same vanishing norm.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < 1e-300 or nv < 1e-300:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def mhss_bound_factor(theta, theta_prime, theta_hat, order: int) -> float:
    """The proposal-dependent factor M(theta, theta'); symmetric in its
    first two arguments. Per-observation weights live in the cache."""
    theta = np.asarray(theta, dtype=float)
    theta_prime = np.asarray(theta_prime, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    step = theta_prime - theta
    s = np.linalg.norm(step)
    if s == 0.0:
        return 0.0
    u = theta - theta_hat
    v = theta_prime - theta_hat
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if order == 1:
        d1u = dk_factor(1, omega_of(u, step))
        d1v = dk_factor(1, omega_of(v, step))
        return s * max(nu * d1u, nv * d1v)
    if order == 2:
        d2u = dk_factor(2, omega_of(u, step))
        d2v = dk_factor(2, omega_of(v, step))
        return 0.5 * s * (s * s / 6.0 + nu * nu * d2u + nv * nv * d2v)
    raise ValueError("order must be 1 or 2")


def smh_bound(theta, theta_prime, theta_hat, order: int, cache: CvCache):
    """l1-norm bound family; returns (c vector, M scalar)."""
    theta = np.asarray(theta, dtype=float)
    theta_prime = np.asarray(theta_prime, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    a = np.sum(np.abs(theta - theta_hat))
    b = np.sum(np.abs(theta_prime - theta_hat))
    if order == 1:
        return cache.c_smh1, float(0.5 * (a * a + b * b))
    if order == 2:
        return cache.c_smh2, float((a**3 + b**3) / 6.0)
    raise ValueError("order must be 1 or 2")


def tuna_bound(theta, theta_prime, cache: CvCache, dataset: Dataset):
    """Lipschitz bound on the raw log-likelihood differences."""
    c = weight_vector(cache, TUNA, 0)
    step = np.asarray(theta_prime, dtype=float) - np.asarray(theta, dtype=float)
    return c, float(np.linalg.norm(step))


def bound_terms(spec: BoundSpec, cache: CvCache, dataset: Dataset, theta, theta_prime):
    """Dispatch to the active family; returns (c vector, M scalar)."""
    if spec.family == MHSS:
        c = weight_vector(cache, MHSS, spec.order)
        return c, mhss_bound_factor(theta, theta_prime, cache.theta_hat, spec.order)
    if spec.family == SMH:
        return smh_bound(theta, theta_prime, cache.theta_hat, spec.order, cache)
    return tuna_bound(theta, theta_prime, cache, dataset)
