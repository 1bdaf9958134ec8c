"""Priors on the regression coefficients.

The samplers only ever need log-density differences and, for the
preconditioner, the prior's Hessian contribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FlatPrior:
    """Improper uniform prior; contributes nothing to any ratio."""

    def log_density(self, theta) -> float:
        return 0.0

    def grad(self, theta) -> np.ndarray:
        return np.zeros_like(np.asarray(theta, dtype=float))

    def hessian(self, d: int) -> np.ndarray:
        return np.zeros((d, d))


@dataclass(frozen=True)
class GaussianIsoPrior:
    """Isotropic normal prior N(0, sigma^2 I)."""

    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ValueError("sigma must be positive")

    def log_density(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return float(-0.5 * theta @ theta / self.sigma**2)

    def grad(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return -theta / self.sigma**2

    def hessian(self, d: int) -> np.ndarray:
        return -np.eye(d) / self.sigma**2


def parse_prior(text: str):
    """Parse 'flat' or 'gaussian:<sigma>' into a prior object."""
    text = text.strip().lower()
    if text == "flat":
        return FlatPrior()
    if text.startswith("gaussian:"):
        return GaussianIsoPrior(float(text.split(":", 1)[1]))
    raise ValueError(f"unknown prior spec: {text!r}")
