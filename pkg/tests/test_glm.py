import numpy as np
import pytest

from mhss import (
    Dataset,
    ModelKind,
    UnsupportedModelError,
    curvature_bound,
    d2h,
    dh,
    first_deriv_bound,
    glm,
    grad_term,
    hess_term,
    linear_predictor,
    loglik_term,
    third_bound,
)
from helpers import central_diff, hybrid_rel_err

LOGISTIC = ModelKind.logistic()
PROBIT = ModelKind.probit()
POISSON = ModelKind.poisson()

ALL_MODELS = [LOGISTIC, PROBIT, POISSON]


def y_values(model):
    if model.variant == glm.POISSON_SOFTPLUS:
        return [0.0, 1.0, 2.0, 5.0, 17.0]
    return [0.0, 1.0]


def test_linear_predictor_examples():
    assert linear_predictor([1.0, 0.0], [3.0, 5.0]) == 3.0
    assert linear_predictor([0.0, 0.0, 0.0], [1.0, -2.0, 9.0]) == 0.0
    assert linear_predictor([0.5, -1.0, 2.0], [2.0, 2.0, 1.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        linear_predictor([1.0, 2.0], [1.0])


def test_loglik_examples():
    assert loglik_term(LOGISTIC, 0.0, 1.0) == pytest.approx(-np.log(2.0), abs=1e-12)
    assert loglik_term(PROBIT, 0.0, 0.0) == pytest.approx(np.log(0.5), abs=1e-12)
    assert loglik_term(POISSON, 0.0, 0.0) == pytest.approx(-np.log(2.0), abs=1e-12)


def test_loglik_finite_in_tails():
    eta = np.linspace(-40.0, 40.0, 33)
    for model in ALL_MODELS:
        for y in y_values(model):
            vals = loglik_term(model, eta, np.full_like(eta, y))
            assert np.all(np.isfinite(vals))


def test_response_domain_errors():
    with pytest.raises(ValueError):
        loglik_term(LOGISTIC, 0.0, 2.0)
    with pytest.raises(ValueError):
        loglik_term(POISSON, 0.0, -1.0)
    with pytest.raises(ValueError):
        loglik_term(POISSON, 0.0, 2.5)


def test_dh_examples():
    assert dh(LOGISTIC, 0.0, 1.0) == pytest.approx(0.5, abs=1e-15)
    # asymptote of the logistic score at eta -> +inf is -1 for y=0
    assert dh(LOGISTIC, 40.0, 0.0) == pytest.approx(-1.0, abs=1e-12)
    # standard-normal density over CDF at zero
    assert dh(PROBIT, 0.0, 1.0) == pytest.approx(0.7978845608028654, abs=1e-12)


def test_d2h_examples():
    assert d2h(LOGISTIC, 0.0, 0.0) == pytest.approx(-0.25, abs=1e-15)
    assert d2h(LOGISTIC, 0.0, 1.0) == pytest.approx(-0.25, abs=1e-15)
    assert d2h(PROBIT, 0.0, 1.0) == pytest.approx(-2.0 / np.pi, abs=1e-12)
    assert d2h(POISSON, 0.0, 0.0) == pytest.approx(-0.25, abs=1e-12)


def test_bound_constants():
    assert curvature_bound(LOGISTIC, 1.0) == 0.25
    assert curvature_bound(PROBIT, 0.0) == 1.0
    assert curvature_bound(POISSON, 3.0) == pytest.approx(0.754)
    assert third_bound(LOGISTIC, 0.0) == pytest.approx(0.09622504486493763)
    assert third_bound(PROBIT, 1.0) == 0.3
    assert third_bound(POISSON, 2.0) == pytest.approx(0.2182250448649376)


def test_first_deriv_bound():
    assert first_deriv_bound(LOGISTIC, 0.0) == 1.0
    assert first_deriv_bound(POISSON, 7.0) == 7.0
    assert first_deriv_bound(POISSON, 0.0) == 1.0
    with pytest.raises(UnsupportedModelError):
        first_deriv_bound(PROBIT, 1.0)


def test_grad_hess_terms():
    g = grad_term([1.0, 0.0], [0.0, 0.0], LOGISTIC, 1.0)
    assert np.allclose(g, [0.5, 0.0])
    H = hess_term([1.0, 0.0], [0.0, 0.0], LOGISTIC, 1.0)
    assert np.allclose(H, [[-0.25, 0.0], [0.0, 0.0]])
    z = np.zeros(3)
    assert np.allclose(grad_term(z, z, LOGISTIC, 1.0), 0.0)
    assert np.allclose(hess_term(z, z, LOGISTIC, 1.0), 0.0)


@pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.variant)
def test_curvature_dominates_d2h(model):
    eta = np.linspace(-40.0, 40.0, 801)
    for y in y_values(model):
        vals = np.abs(d2h(model, eta, np.full_like(eta, y)))
        assert np.all(vals <= curvature_bound(model, y) + 1e-12)


@pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.variant)
def test_dh_matches_finite_differences(model):
    eta = np.linspace(-20.0, 20.0, 81)
    h = 1e-5
    for y in y_values(model):
        yv = np.full_like(eta, y)
        fd = central_diff(lambda e: np.asarray(loglik_term(model, e, yv)), eta, h)
        exact = np.asarray(dh(model, eta, yv))
        err = hybrid_rel_err(fd, exact, floor=1e-2)
        assert np.max(err) < 1e-6


@pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: m.variant)
def test_d2h_matches_finite_differences(model):
    eta = np.linspace(-20.0, 20.0, 81)
    h = 1e-5
    for y in y_values(model):
        yv = np.full_like(eta, y)
        fd = central_diff(lambda e: np.asarray(dh(model, e, yv)), eta, h)
        exact = np.asarray(d2h(model, eta, yv))
        err = hybrid_rel_err(fd, exact, floor=1e-2)
        assert np.max(err) < 1e-5


@pytest.mark.parametrize("model", [LOGISTIC, PROBIT], ids=lambda m: m.variant)
def test_binary_symmetry(model):
    eta = np.linspace(-15.0, 15.0, 61)
    ll1 = loglik_term(model, eta, np.ones_like(eta))
    ll0 = loglik_term(model, -eta, np.zeros_like(eta))
    assert np.allclose(ll1, ll0, atol=1e-12)


def third_deriv_fd(model, eta, y, h=1e-3):
    yv = np.full_like(eta, y)
    return central_diff(lambda e: np.asarray(d2h(model, e, yv)), eta, h)


def test_logistic_third_derivative_envelope():
    eta = np.linspace(-30.0, 30.0, 2001)
    fd = np.abs(third_deriv_fd(LOGISTIC, eta, 0.0))
    assert np.max(fd) <= np.sqrt(3.0) / 18.0 + 1e-12


def test_probit_third_derivative_envelope():
    # the 0.3 constant is an empirical envelope; confirm it on a fine grid
    eta = np.linspace(-40.0, 40.0, 4001)
    for y in (0.0, 1.0):
        fd = np.abs(third_deriv_fd(PROBIT, eta, y))
        assert np.max(fd) <= 0.3


def test_poisson_third_derivative_envelope():
    eta = np.linspace(-30.0, 30.0, 2001)
    for y in (0.0, 1.0, 2.0, 5.0, 17.0):
        fd = np.abs(third_deriv_fd(POISSON, eta, y))
        assert np.max(fd) <= third_bound(POISSON, y) + 1e-9


def test_poisson_rate_scale_is_a_shift():
    scaled = ModelKind.poisson(rate_scale=3.5)
    eta = np.linspace(-10.0, 10.0, 21)
    y = np.full_like(eta, 2.0)
    expected = loglik_term(POISSON, eta + np.log(3.5), y)
    assert np.allclose(loglik_term(scaled, eta, y), expected, atol=1e-12)
    assert np.allclose(dh(scaled, eta, y), dh(POISSON, eta + np.log(3.5), y), atol=1e-12)


def test_dataset_validation():
    X = np.ones((3, 2))
    with pytest.raises(ValueError):
        Dataset(X=X, y=np.array([0.0, 1.0, 2.0]), model=LOGISTIC)
    with pytest.raises(ValueError):
        Dataset(X=np.array([[np.inf, 0.0]]), y=np.array([1.0]), model=LOGISTIC)
    with pytest.raises(ValueError):
        Dataset(X=np.ones((0, 2)), y=np.zeros(0), model=LOGISTIC)
    ds = Dataset(X=X, y=np.array([0.0, 1.0, 1.0]), model=LOGISTIC)
    assert ds.n == 3 and ds.d == 2
