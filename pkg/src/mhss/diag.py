"""Chain diagnostics: ESS, jump distances, acceptance and batch telemetry.

The ESS estimator truncates the autocorrelation sum with the initial
monotone positive-sequence rule, which needs no window parameter and is
deterministic given the samples.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    x = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, n=m)
    acov = np.fft.irfft(f * np.conj(f), n=m)[:n].real
    acov /= n
    return acov / acov[0]


def ess(samples_column) -> float:
    """Effective sample size of one chain component.

    N / (1 + 2 sum rho_k) with the pairwise sums Gamma_m = rho_2m +
    rho_2m+1 truncated at the first nonpositive pair and forced
    non-increasing. Clamped to [1, N]; a constant chain reports 1.
    """
    x = np.asarray(samples_column, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise ValueError("need a 1-d chain of at least 10 samples")
    if np.var(x) == 0.0:
        return 1.0
    rho = _autocorr(x)
    n = x.size
    n_pairs = n // 2
    tau = -1.0
    prev = np.inf
    for m in range(n_pairs):
        gamma = rho[2 * m] + (rho[2 * m + 1] if 2 * m + 1 < n else 0.0)
        if gamma <= 0.0:
            break
        gamma = min(gamma, prev)
        prev = gamma
        tau += 2.0 * gamma
    return float(np.clip(n / max(tau, 1e-12), 1.0, n))


def msjd(samples) -> float:
    """Mean squared one-step jump, averaged over steps and coordinates."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    return float(np.mean(np.diff(samples, axis=0) ** 2))


def batch_means_se(x, n_batches: int | None = None) -> float:
    """Standard error of the chain mean by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n_batches is None:
        n_batches = max(2, int(np.sqrt(n)))
    b = n // n_batches
    if b < 1:
        raise ValueError("too few samples for the requested batch count")
    means = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def efficiency_curve(lam: float) -> float:
    """Scaled jump efficiency per unit of subsample cost: 2 lambda Phi(-lambda/2)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return float(2.0 * lam * norm.cdf(-lam / 2.0))


def optimal_lambda() -> float:
    """Argmax of the efficiency curve on [0.01, 10] by golden-section search."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.01, 10.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = efficiency_curve(c), efficiency_curve(d)
    while b - a > 1e-8:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = efficiency_curve(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = efficiency_curve(d)
    return float(0.5 * (a + b))


@dataclass
class ChainMetrics:
    ess: list
    ess_min: float
    ess_mean: float
    msjd: float
    acceptance_rate: float
    stage1_rate: float
    mean_batch: float
    ess_per_second: float
    ess_per_batch: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ChainMetrics":
        return cls(**json.loads(text))


def summarize(output) -> ChainMetrics:
    """Aggregate a ChainOutput into scalar metrics.

    Telemetry is averaged over post-burn-in iterations so that metrics
    describe the same stretch of chain as the retained samples.
    """
    samples = output.samples
    burn = output.burn_in
    accept = np.asarray(output.accept_flags[burn:], dtype=float)
    stage1 = np.asarray(output.stage1_pass_flags[burn:], dtype=float)
    batches = np.asarray(output.batch_sizes[burn:], dtype=float)

    if samples.shape[0] >= 10:
        per_coord = [ess(samples[:, j]) for j in range(samples.shape[1])]
    else:
        per_coord = [1.0] * samples.shape[1]
    jump = msjd(samples) if samples.shape[0] >= 2 else 0.0
    mean_batch = float(batches.mean()) if batches.size else 0.0
    ess_mean = float(np.mean(per_coord))
    wall = max(output.wall_time_seconds, 1e-12)
    return ChainMetrics(
        ess=[float(e) for e in per_coord],
        ess_min=float(np.min(per_coord)),
        ess_mean=ess_mean,
        msjd=float(jump),
        acceptance_rate=float(accept.mean()) if accept.size else 0.0,
        stage1_rate=float(stage1.mean()) if stage1.size else 0.0,
        mean_batch=mean_batch,
        ess_per_second=ess_mean / wall,
        ess_per_batch=ess_mean / mean_batch if mean_batch > 0 else float("inf"),
    )
