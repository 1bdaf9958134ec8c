"""Poisson-thinning subsampler.

Per-index Poisson counts S_i ~ Pois(phi_i) for all n observations are
simulated in O(E[B]) time rather than O(n):

  1. draw a total count B ~ Pois(C M) where C = sum_i c_i,
  2. assign each of the B slots an index with probability c_i / C
     (alias table, O(1) per draw),
  3. keep each assigned slot with probability phi_i / (c_i M).

An optional symmetric extra rate kappa_i = kappa_per_c * c_i is folded
into both phi_i and the thinning cap, which preserves the single alias
table because kappa_i is proportional to c_i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cv
from .bounds import BoundSpec, bound_terms
from .cv import CvCache
from .glm import Dataset

_REL_SLACK = 1e-9


class BoundViolationError(RuntimeError):
    """|Delta_i| exceeded c_i M; the bound family is invalid for this data.

    Exactness of every sampler rests on the bound, so a violation must
    abort the run rather than be patched over.
    """


class AliasTable:
    """Walker/Vose alias table: O(n) build, O(1) per categorical draw."""

    def __init__(self, weights):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a nonempty 1-d array")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        total = float(weights.sum())
        if total <= 0.0:
            raise ValueError("at least one weight must be positive")

        n = weights.size
        scaled = weights * (n / total)
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] = (scaled[g] + scaled[s]) - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # leftovers are 1 up to rounding
        self.prob = prob
        self.alias = alias
        self.total_weight = total
        self.n = n

    def sample(self, rng, size: int) -> np.ndarray:
        """Draw `size` indices i with probability weights[i] / total."""
        k = rng.integers(0, self.n, size=size)
        u = rng.random(size)
        return np.where(u < self.prob[k], k, self.alias[k])


def build_alias(weights) -> AliasTable:
    return AliasTable(weights)


def alias_for(cache: CvCache, spec: BoundSpec) -> AliasTable:
    """Alias table for the family's weights; built once per cache and reused."""
    key = (spec.family, spec.cv_order)
    table = cache.alias_tables.get(key)
    if table is None:
        table = AliasTable(cv.weight_vector(cache, spec.family, spec.order))
        cache.alias_tables[key] = table
    return table


def phi(delta, cm, gamma: float):
    """Poisson expectation phi = gamma max(0, Delta) + (1-gamma)(cM + min(0, Delta)).

    Lies in [0, cM] whenever |Delta| <= cM, and phi(Delta) - phi(-Delta)
    = Delta for every gamma. Vectorizes over delta and cm.
    """
    delta = np.asarray(delta, dtype=float)
    cm = np.asarray(cm, dtype=float)
    if np.any(np.abs(delta) > cm * (1.0 + _REL_SLACK)):
        worst = int(np.argmax(np.abs(delta) - cm))
        raise BoundViolationError(
            f"|Delta| = {np.abs(delta).flat[worst]:.6g} exceeds bound "
            f"c*M = {cm.flat[worst] if cm.ndim else float(cm):.6g}"
        )
    out = gamma * np.maximum(0.0, delta) + (1.0 - gamma) * (cm + np.minimum(0.0, delta))
    out = np.clip(out, 0.0, cm)
    return out if out.ndim else float(out)


@dataclass
class Subsample:
    """Thinned index multiset: distinct indices with multiplicities s_i >= 1.

    phi and phi_prime store phi_i + kappa_i and phi'_i + kappa_i for the
    retained indices. raw_count is B, the pre-thinning Poisson total.
    """

    raw_count: int
    indices: np.ndarray
    counts: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray

    @property
    def retained(self) -> int:
        return int(self.counts.sum())


def _empty(raw_count: int = 0) -> Subsample:
    z = np.zeros(0)
    return Subsample(raw_count, np.zeros(0, dtype=int), np.zeros(0, dtype=int), z, z)


def draw_subsample(
    rng,
    cache: CvCache,
    dataset: Dataset,
    theta,
    theta_prime,
    spec: BoundSpec,
    gamma: float = 0.0,
    extra_rate_per_unit_c: float = 0.0,
) -> Subsample:
    """Draw the index multiset whose count of index i is Pois(kappa_i + phi_i).

    extra_rate_per_unit_c sets kappa_i = extra_rate_per_unit_c * c_i;
    zero for the control-variate samplers.
    """
    if extra_rate_per_unit_c < 0:
        raise ValueError("extra rate must be nonnegative")
    c, M = bound_terms(spec, cache, dataset, theta, theta_prime)
    table = alias_for(cache, spec)
    total_rate = table.total_weight * (M + extra_rate_per_unit_c)
    if total_rate <= 0.0:
        return _empty()

    B = int(rng.poisson(total_rate))
    if B == 0:
        return _empty()

    idx = table.sample(rng, B)
    uniq, counts = np.unique(idx, return_counts=True)

    delta = cv.delta_for_indices(cache, dataset, uniq, theta, theta_prime, spec.cv_order)
    cm = c[uniq] * M
    kappa = extra_rate_per_unit_c * c[uniq]
    phi_fwd = phi(delta, cm, gamma) + kappa
    phi_rev = phi(-delta, cm, gamma) + kappa

    keep_prob = phi_fwd / (cm + kappa)
    kept = rng.binomial(counts, keep_prob)
    mask = kept > 0
    return Subsample(B, uniq[mask], kept[mask], phi_fwd[mask], phi_rev[mask])


def stage2_log_ratio(sub: Subsample) -> float:
    """sum_i s_i (log phi'_i - log phi_i); -inf signals certain rejection."""
    if sub.indices.size == 0:
        return 0.0
    if np.any(sub.phi_prime <= 0.0):
        return -np.inf
    return float(np.sum(sub.counts * (np.log(sub.phi_prime) - np.log(sub.phi))))
