import numpy as np
import pytest

from mhss import Dataset, ModelKind, cv, glm, grad_term, hess_term
from mhss.bounds import mhss_bound_factor
from helpers import tiny_dataset

LOGISTIC = ModelKind.logistic()


def random_instance(rng, n, d, model):
    X = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n, d))
    X[:, 0] = 1.0
    if model.variant == glm.POISSON_SOFTPLUS:
        y = rng.poisson(1.0, size=n).astype(float)
    else:
        y = rng.integers(0, 2, size=n).astype(float)
    return Dataset(X=X, y=y, model=model)


def test_build_cache_single_row():
    ds = tiny_dataset([[1.0, 0.0]], [1.0])
    cache = cv.build_cache(ds, np.zeros(2))
    assert np.allclose(cache.sum_g, [0.5, 0.0])
    assert np.allclose(cache.sum_H, [[-0.25, 0.0], [0.0, 0.0]])
    assert cache.c1[0] == pytest.approx(0.25)
    assert cache.c2[0] == pytest.approx(np.sqrt(3.0) / 18.0)
    assert cache.C1 == pytest.approx(0.25)


def test_build_cache_additivity():
    ds1 = tiny_dataset([[1.0, 0.5]], [1.0])
    ds2 = tiny_dataset([[1.0, 0.5], [1.0, 0.5]], [1.0, 1.0])
    th = np.array([0.3, -0.2])
    c1 = cv.build_cache(ds1, th)
    c2 = cv.build_cache(ds2, th)
    assert np.allclose(c2.sum_g, 2.0 * c1.sum_g)
    assert np.allclose(c2.sum_H, 2.0 * c1.sum_H)
    assert c2.C1 == pytest.approx(2.0 * c1.C1)


def test_build_cache_zero_row():
    ds = tiny_dataset([[0.0, 0.0], [1.0, 1.0]], [0.0, 1.0])
    cache = cv.build_cache(ds, np.zeros(2))
    assert cache.c1[0] == 0.0 and cache.c2[0] == 0.0
    assert cache.x_norm[0] == 0.0


def test_build_cache_validation():
    ds = tiny_dataset([[1.0, 0.0]], [1.0])
    with pytest.raises(ValueError):
        cv.build_cache(ds, np.zeros(3))
    with pytest.raises(ValueError):
        cv.build_cache(ds, np.array([np.nan, 0.0]))


def test_build_cache_deterministic():
    rng = np.random.default_rng(5)
    ds = random_instance(rng, 50, 4, LOGISTIC)
    th = rng.normal(size=4)
    a = cv.build_cache(ds, th)
    b = cv.build_cache(ds, th)
    for name in ("sum_g", "sum_H", "c1", "c2", "dh_hat", "d2h_hat"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_r_total_examples():
    ds = tiny_dataset([[1.0, 0.0]], [1.0])
    cache = cv.build_cache(ds, np.zeros(2))
    th = np.array([0.4, -0.1])
    assert cv.r_total(cache, th, th, 1) == 0.0
    assert cv.r_total(cache, th, th, 2) == 0.0
    # sum_g=(0.5, 0), displacement (2, 3)
    assert cv.r_total(cache, np.zeros(2), np.array([2.0, 3.0]), 1) == pytest.approx(1.0)


@pytest.mark.parametrize("order", [1, 2])
def test_r_total_antisymmetry(order):
    rng = np.random.default_rng(11)
    ds = random_instance(rng, 30, 3, LOGISTIC)
    cache = cv.build_cache(ds, rng.normal(size=3))
    for _ in range(20):
        a = rng.normal(size=3)
        b = rng.normal(size=3)
        fwd = cv.r_total(cache, a, b, order)
        rev = cv.r_total(cache, b, a, order)
        assert fwd == pytest.approx(-rev, abs=1e-12)


def test_r_i_example():
    ds = tiny_dataset([[1.0, 0.0]], [1.0])
    cache = cv.build_cache(ds, np.zeros(2))
    assert cv.r_i(cache, ds, 0, np.zeros(2), np.array([2.0, 3.0]), 1) == pytest.approx(1.0)
    with pytest.raises(IndexError):
        cv.r_i(cache, ds, 5, np.zeros(2), np.zeros(2), 1)


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("model", [LOGISTIC, ModelKind.probit(), ModelKind.poisson()],
                         ids=lambda m: m.variant)
def test_r_i_matches_brute_force_and_sums_to_total(model, order):
    rng = np.random.default_rng(17)
    for n, d in [(5, 2), (20, 4)]:
        ds = random_instance(rng, n, d, model)
        th_hat = 0.1 * rng.normal(size=d)
        cache = cv.build_cache(ds, th_hat)
        theta = th_hat + 0.2 * rng.normal(size=d)
        theta_p = theta + 0.2 * rng.normal(size=d)
        u = theta_p - theta
        mid = 0.5 * (theta + theta_p) - th_hat
        total = 0.0
        for i in range(n):
            g_i = grad_term(ds.X[i], th_hat, model, ds.y[i])
            r_ref = float(u @ g_i)
            if order == 2:
                H_i = hess_term(ds.X[i], th_hat, model, ds.y[i])
                r_ref += float(u @ H_i @ mid)
            got = cv.r_i(cache, ds, i, theta, theta_p, order)
            assert got == pytest.approx(r_ref, rel=1e-10, abs=1e-12)
            total += r_ref
        assert cv.r_total(cache, theta, theta_p, order) == pytest.approx(
            total, rel=1e-10, abs=1e-12
        )


def test_delta_examples():
    rng = np.random.default_rng(23)
    ds = random_instance(rng, 10, 3, LOGISTIC)
    cache = cv.build_cache(ds, np.zeros(3))
    th = rng.normal(size=3)
    assert cv.delta_i(cache, ds, 2, th, th, 1) == 0.0
    a = rng.normal(size=3)
    b = rng.normal(size=3)
    for order in (1, 2):
        fwd = cv.delta_i(cache, ds, 4, a, b, order)
        rev = cv.delta_i(cache, ds, 4, b, a, order)
        assert fwd == pytest.approx(-rev, abs=1e-12)


@pytest.mark.parametrize("order,expected_ratio", [(1, 4.0), (2, 8.0)])
def test_delta_decay_rate(order, expected_ratio):
    # scaling the whole configuration down by 2 shrinks the remainder by
    # 2^(order+1): quadratic for first order, cubic for second
    ds = tiny_dataset([[1.2, -0.7]], [1.0])
    th_hat = np.array([0.3, 0.1])
    cache = cv.build_cache(ds, th_hat)
    a_dir = np.array([0.9, 0.4])
    b_dir = np.array([-0.3, 1.1])
    prev = None
    ratios = []
    for k in range(4):
        s = 0.2 / 2**k
        theta = th_hat + s * a_dir
        theta_p = theta + s * b_dir
        val = abs(cv.delta_i(cache, ds, 0, theta, theta_p, order))
        if prev is not None:
            ratios.append(prev / val)
        prev = val
    assert ratios[-1] == pytest.approx(expected_ratio, rel=0.15)


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("model", [LOGISTIC, ModelKind.probit(), ModelKind.poisson()],
                         ids=lambda m: m.variant)
def test_remainder_bound_validity(model, order):
    rng = np.random.default_rng(31)
    ds = random_instance(rng, 200, 5, model)
    th_hat = 0.1 * rng.normal(size=5)
    cache = cv.build_cache(ds, th_hat)
    c = cache.c1 if order == 1 else cache.c2
    scale = 1.0 / np.sqrt(ds.n)
    for rep in range(200):
        sd = scale if rep % 2 == 0 else 0.5
        theta = th_hat + sd * rng.normal(size=5)
        theta_p = th_hat + sd * rng.normal(size=5)
        M = mhss_bound_factor(theta, theta_p, th_hat, order)
        delta = cv.delta_for_indices(cache, ds, None, theta, theta_p, order)
        assert np.all(np.abs(delta) <= c * M + 1e-10)


def test_r_total_equals_sum_of_r_i_bigger():
    rng = np.random.default_rng(37)
    ds = random_instance(rng, 100, 6, LOGISTIC)
    cache = cv.build_cache(ds, rng.normal(size=6) * 0.1)
    theta = rng.normal(size=6)
    theta_p = rng.normal(size=6)
    for order in (1, 2):
        parts = cv.r_for_indices(cache, ds, None, theta, theta_p, order)
        total = cv.r_total(cache, theta, theta_p, order)
        assert total == pytest.approx(float(parts.sum()), rel=1e-10)


def test_sidecar_roundtrip(tmp_path):
    rng = np.random.default_rng(41)
    ds = random_instance(rng, 25, 3, LOGISTIC)
    cache = cv.build_cache(ds, rng.normal(size=3))
    V = np.array([[2.0, 0.1, 0.0], [0.1, 1.0, 0.0], [0.0, 0.0, 3.0]])
    path = tmp_path / "cache.bin"
    cv.save_cache(path, cache, V)
    loaded, V2 = cv.load_cache(path)
    for name in ("theta_hat", "eta_hat", "dh_hat", "d2h_hat", "sum_g", "sum_H",
                 "x_norm", "x_maxabs", "c1", "c2", "c_smh1", "c_smh2", "c_tuna"):
        assert np.array_equal(getattr(loaded, name), getattr(cache, name)), name
    assert np.array_equal(V2, V)
    assert loaded.C1 == cache.C1 and loaded.C2 == cache.C2


def test_sidecar_no_vd_and_probit(tmp_path):
    ds = tiny_dataset([[1.0, 0.0]], [1.0], ModelKind.probit())
    cache = cv.build_cache(ds, np.zeros(2))
    assert cache.c_tuna is None
    path = tmp_path / "cache.bin"
    cv.save_cache(path, cache)
    loaded, V = cv.load_cache(path)
    assert V is None and loaded.c_tuna is None


def test_sidecar_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a cache")
    with pytest.raises(ValueError):
        cv.load_cache(path)
