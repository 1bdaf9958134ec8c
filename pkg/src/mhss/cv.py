"""Control-variate cache built around a fixed expansion point theta_hat.

The cache holds everything the samplers reuse across iterations: the
aggregate gradient and Hessian sums that drive the cheap screening
ratio, and per-observation scalars (derivatives of h at theta_hat,
covariate norms, bound weights) that make each per-index control
variate an O(d) dot product instead of an O(d^2) matrix product.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import glm
from .glm import Dataset

_MAGIC = b"MHSSCV\x00\x01"


@dataclass
class CvCache:
    theta_hat: np.ndarray
    eta_hat: np.ndarray      # x_i . theta_hat
    dh_hat: np.ndarray       # h'(eta_hat_i; y_i)
    d2h_hat: np.ndarray      # h''(eta_hat_i; y_i)
    sum_g: np.ndarray        # sum_i g_i(theta_hat)
    sum_H: np.ndarray        # sum_i H_i(theta_hat)
    x_norm: np.ndarray       # ||x_i||_2
    x_maxabs: np.ndarray     # max_j |x_ij|
    c1: np.ndarray           # ||x_i||^2 M(y_i)
    c2: np.ndarray           # ||x_i||^3 L(y_i)
    c_smh1: np.ndarray       # max_j x_ij^2 M(y_i)
    c_smh2: np.ndarray       # max_j |x_ij|^3 L(y_i)
    c_tuna: np.ndarray | None  # ||x_i|| b(y_i), None when the model has no b(y)
    C1: float
    C2: float
    # alias tables keyed by (family, order); filled once on first use
    alias_tables: dict = field(default_factory=dict, repr=False)

    @property
    def d(self) -> int:
        return self.theta_hat.shape[0]

    @property
    def n(self) -> int:
        return self.eta_hat.shape[0]


def build_cache(dataset: Dataset, theta_hat) -> CvCache:
    """One O(n d^2) pass over the data; everything else is O(n) or O(d^2)."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta_hat.shape != (dataset.d,):
        raise ValueError("theta_hat has the wrong length")
    if not np.all(np.isfinite(theta_hat)):
        raise ValueError("theta_hat must be finite")

    X, y, model = dataset.X, dataset.y, dataset.model
    eta_hat = X @ theta_hat
    dh_hat = np.asarray(glm.dh(model, eta_hat, y))
    d2h_hat = np.asarray(glm.d2h(model, eta_hat, y))
    if not (np.all(np.isfinite(dh_hat)) and np.all(np.isfinite(d2h_hat))):
        raise ValueError("non-finite derivative at theta_hat; bad expansion point")

    sum_g = X.T @ dh_hat
    sum_H = (X * d2h_hat[:, None]).T @ X
    sum_H = 0.5 * (sum_H + sum_H.T)

    x_norm = np.linalg.norm(X, axis=1)
    x_maxabs = np.max(np.abs(X), axis=1)
    m_y = np.asarray(glm.curvature_bound(model, y))
    l_y = np.asarray(glm.third_bound(model, y))
    c1 = x_norm**2 * m_y
    c2 = x_norm**3 * l_y
    c_smh1 = x_maxabs**2 * m_y
    c_smh2 = x_maxabs**3 * l_y
    try:
        c_tuna = x_norm * np.asarray(glm.first_deriv_bound(model, y))
    except glm.UnsupportedModelError:
        c_tuna = None

    return CvCache(
        theta_hat=theta_hat,
        eta_hat=eta_hat,
        dh_hat=dh_hat,
        d2h_hat=d2h_hat,
        sum_g=sum_g,
        sum_H=sum_H,
        x_norm=x_norm,
        x_maxabs=x_maxabs,
        c1=c1,
        c2=c2,
        c_smh1=c_smh1,
        c_smh2=c_smh2,
        c_tuna=c_tuna,
        C1=float(np.sum(c1)),
        C2=float(np.sum(c2)),
    )


def r_total(cache: CvCache, theta, theta_prime, order: int) -> float:
    """Sum over i of the control variates, via the precomputed aggregates."""
    theta = np.asarray(theta, dtype=float)
    theta_prime = np.asarray(theta_prime, dtype=float)
    u = theta_prime - theta
    out = float(u @ cache.sum_g)
    if order == 2:
        mid = 0.5 * (theta + theta_prime) - cache.theta_hat
        out += float(u @ cache.sum_H @ mid)
    elif order != 1:
        raise ValueError("order must be 1 or 2")
    return out


def r_for_indices(cache: CvCache, dataset: Dataset, idx, theta, theta_prime, order: int):
    """Control variates r_i for the given rows; idx=None means all rows.

    order 0 means no control variate (identically zero).
    """
    theta = np.asarray(theta, dtype=float)
    theta_prime = np.asarray(theta_prime, dtype=float)
    X = dataset.X if idx is None else dataset.X[idx]
    if order == 0:
        return np.zeros(X.shape[0])
    dh_hat = cache.dh_hat if idx is None else cache.dh_hat[idx]
    a = X @ (theta_prime - theta)
    out = a * dh_hat
    if order == 2:
        d2h_hat = cache.d2h_hat if idx is None else cache.d2h_hat[idx]
        b = X @ (0.5 * (theta + theta_prime) - cache.theta_hat)
        out = out + a * b * d2h_hat
    elif order != 1:
        raise ValueError("order must be 0, 1 or 2")
    return out


def r_i(cache: CvCache, dataset: Dataset, i: int, theta, theta_prime, order: int) -> float:
    if not (0 <= i < dataset.n):
        raise IndexError(f"index {i} out of range for n={dataset.n}")
    return float(r_for_indices(cache, dataset, np.array([i]), theta, theta_prime, order)[0])


def delta_for_indices(cache: CvCache, dataset: Dataset, idx, theta, theta_prime, order: int):
    """Remainders Delta_i = r_i - (l_i(theta') - l_i(theta)) for the given rows."""
    r = r_for_indices(cache, dataset, idx, theta, theta_prime, order)
    diff = glm.loglik_terms(dataset, theta_prime, idx) - glm.loglik_terms(dataset, theta, idx)
    return r - diff


def delta_i(cache: CvCache, dataset: Dataset, i: int, theta, theta_prime, order: int) -> float:
    if not (0 <= i < dataset.n):
        raise IndexError(f"index {i} out of range for n={dataset.n}")
    return float(delta_for_indices(cache, dataset, np.array([i]), theta, theta_prime, order)[0])


def weight_vector(cache: CvCache, family: str, order: int) -> np.ndarray:
    """Per-observation bound weights c_i for the selected bound family."""
    if family == "mhss":
        return cache.c1 if order == 1 else cache.c2
    if family == "smh":
        return cache.c_smh1 if order == 1 else cache.c_smh2
    if family == "tuna":
        if cache.c_tuna is None:
            raise glm.UnsupportedModelError(
                "no first-derivative bound for this model; tuna weights unavailable"
            )
        return cache.c_tuna
    raise ValueError(f"unknown bound family: {family!r}")


# --- sidecar serialization -------------------------------------------------
#
# Flat binary layout, little-endian throughout: magic, u32 flags
# (bit 0: V_d block present), u64 n, u64 d, then the cache arrays in a
# fixed order as f8, then optionally V_d (d*d f8).

_ARRAY_FIELDS = (
    "theta_hat", "eta_hat", "dh_hat", "d2h_hat", "sum_g", "sum_H",
    "x_norm", "x_maxabs", "c1", "c2", "c_smh1", "c_smh2",
)


def save_cache(path, cache: CvCache, V_d: np.ndarray | None = None):
    """Write the cache (and optionally the preconditioner) to a sidecar file."""
    flags = 1 if V_d is not None else 0
    if cache.c_tuna is not None:
        flags |= 2
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQQ", flags, cache.n, cache.d))
        for name in _ARRAY_FIELDS:
            fh.write(np.ascontiguousarray(getattr(cache, name), dtype="<f8").tobytes())
        if cache.c_tuna is not None:
            fh.write(np.ascontiguousarray(cache.c_tuna, dtype="<f8").tobytes())
        if V_d is not None:
            fh.write(np.ascontiguousarray(V_d, dtype="<f8").tobytes())


def load_cache(path):
    """Read a sidecar file; returns (cache, V_d or None)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError("not a cache sidecar file (bad magic or version)")
        flags, n, d = struct.unpack("<IQQ", fh.read(20))

        def read(shape):
            count = int(np.prod(shape))
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError("truncated cache sidecar file")
            return np.frombuffer(buf, dtype="<f8").astype(float).reshape(shape)

        shapes = {
            "theta_hat": (d,), "eta_hat": (n,), "dh_hat": (n,), "d2h_hat": (n,),
            "sum_g": (d,), "sum_H": (d, d), "x_norm": (n,), "x_maxabs": (n,),
            "c1": (n,), "c2": (n,), "c_smh1": (n,), "c_smh2": (n,),
        }
        arrays = {name: read(shapes[name]) for name in _ARRAY_FIELDS}
        c_tuna = read((n,)) if flags & 2 else None
        V_d = read((d, d)) if flags & 1 else None

    cache = CvCache(
        c_tuna=c_tuna,
        C1=float(np.sum(arrays["c1"])),
        C2=float(np.sum(arrays["c2"])),
        **arrays,
    )
    return cache, V_d
