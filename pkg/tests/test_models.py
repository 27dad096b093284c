import numpy as np
import pytest
from scipy.special import gammaln
from scipy.stats import multivariate_normal as scipy_mvn

from smom.errors import InvalidShape, MissingFisherScore, NotSPD
from smom.models import (generalized_gamma, generalized_normal, gn_reference_theta,
                         gn_unit_variance_theta, matrix_bingham, multivariate_normal, ppi_model)
from smom.samplers import sample

from conftest import fd_grad, model_cases, random_spd, within_se

CASES = model_cases()
IDS = [c[0] for c in CASES]


def _points(model, theta, g, m=20):
    return sample(model, theta, m, g)


def _ambient_fd_grad(fn, x):
    """Central differences with the step rule h = 1e-5 (1 + |x|)."""
    out = np.empty_like(x)
    for a in range(x.shape[1]):
        h = 1e-5 * (1 + np.abs(x[:, a]))
        xp, xm = x.copy(), x.copy()
        xp[:, a] += h
        xm[:, a] -= h
        out[:, a] = (fn(xp) - fn(xm)) / (2 * h)
    return out


@pytest.mark.parametrize("name,model,theta", CASES, ids=IDS)
def test_grad_x_log_matches_fd(name, model, theta, rng):
    x = _points(model, theta, rng)
    fd = _ambient_fd_grad(lambda y: model.log_unnorm(theta, y), x)
    an = model.grad_x_log(theta, x)
    np.testing.assert_allclose(an, fd, rtol=1e-5, atol=1e-5 * (1 + np.abs(an).max()))


@pytest.mark.parametrize("name,model,theta", CASES, ids=IDS)
def test_mixed_score_matches_theta_fd(name, model, theta, rng):
    x = _points(model, theta, rng)
    for j in range(model.d):
        e = np.zeros(model.d)
        e[j] = 1e-5 * max(1.0, abs(theta[j]))
        fd = (model.grad_x_log(theta + e, x) - model.grad_x_log(theta - e, x)) / (2 * e[j])
        fd = model.domain.project(x, fd)
        an = model.mixed_score_field(theta, j).eval(x)
        np.testing.assert_allclose(an, fd, rtol=1e-5, atol=1e-5 * (1 + np.abs(an).max()))


@pytest.mark.parametrize("name,model,theta", [c for c in CASES if c[1].is_expfam],
                         ids=[c[0] for c in CASES if c[1].is_expfam])
def test_expfam_mixed_field_is_grad_t(name, model, theta, rng):
    x = _points(model, theta, rng)
    other = theta + rng.normal(size=model.d)
    for j in range(model.d):
        f = model.mixed_score_field(theta, j)
        assert f is model.mixed_score_field(other, j)
        assert np.array_equal(f.eval(x), model.domain.project(x, model.grad_t(x)[:, j]))
    np.testing.assert_allclose(model.log_unnorm(theta, x), model.t(x) @ theta + model.b(x),
                               rtol=0, atol=0)


@pytest.mark.parametrize("name,model,theta", [c for c in CASES if c[1].has_fisher],
                         ids=[c[0] for c in CASES if c[1].has_fisher])
def test_fisher_mean_zero(name, model, theta):
    g = np.random.default_rng(7)
    x = sample(model, theta, 5000, g)
    for j in range(model.d):
        ok, mean, se = within_se(model.fisher_score(theta, j, x))
        assert ok, (j, mean, se)


@pytest.mark.parametrize("name,model,theta", [c for c in CASES if c[1].has_fisher],
                         ids=[c[0] for c in CASES if c[1].has_fisher])
def test_fisher_x_gradient_is_mixed_field(name, model, theta, rng):
    x = _points(model, theta, rng)
    for j in range(model.d):
        fd = _ambient_fd_grad(lambda y: model.fisher_score(theta, j, y), x)
        an = model.mixed_score_field(theta, j).eval(x)
        np.testing.assert_allclose(an, fd, rtol=1e-5, atol=1e-5 * (1 + np.abs(an).max()))


def _gn_log_density(beta, theta, x):
    return (np.log(beta) + np.log(theta) / (2 * beta) - gammaln(1 / (2 * beta))
            - theta * x ** (2 * beta))


def _gg_log_density(beta, theta, x):
    return (2 * beta * np.log(np.abs(x)) - theta * x * x + (beta + 0.5) * np.log(theta)
            - gammaln(beta + 0.5))


@pytest.mark.parametrize("beta", [1, 2, 3])
def test_fisher_matches_normalised_density(beta, rng):
    x = rng.normal(size=10) * 1.5
    th, h = 0.8, 1e-6
    gn, gg = generalized_normal(beta), generalized_gamma(beta)
    fd_gn = (_gn_log_density(beta, th + h, x) - _gn_log_density(beta, th - h, x)) / (2 * h)
    fd_gg = (_gg_log_density(beta, th + h, x) - _gg_log_density(beta, th - h, x)) / (2 * h)
    np.testing.assert_allclose(gn.fisher_score([th], 0, x[:, None]), fd_gn, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(gg.fisher_score([th], 0, x[:, None]), fd_gg, rtol=1e-6, atol=1e-6)


def test_normal_fisher_matches_scipy(rng):
    p = 3
    model = multivariate_normal(rng.normal(size=p), random_spd(rng, p))
    theta = model.default_theta
    x = rng.normal(size=(8, p))
    h = 1e-6
    for j in range(model.d):
        e = np.zeros(model.d)
        e[j] = h

        def logpdf(th):
            mu, sig = model.unpack(th)
            return scipy_mvn(mu, sig).logpdf(x)

        fd = (logpdf(theta + e) - logpdf(theta - e)) / (2 * h)
        np.testing.assert_allclose(model.fisher_score(theta, j, x), fd, rtol=1e-5, atol=1e-6)


# --- generalized normal -----------------------------------------------------

def test_gn_beta1_is_normal():
    m = generalized_normal(1)
    x = np.array([[-1.0], [0.5], [2.0]])
    np.testing.assert_allclose(m.grad_x_log([0.7], x), -2 * 0.7 * x)


def test_gn_mixed_field_value():
    m = generalized_normal(2)
    assert m.mixed_score_field([1.0], 0).eval(np.array([1.0]))[0] == -4.0


def test_gn_fisher_at_zero():
    assert generalized_normal(2).fisher_score([1.0], 0, np.array([0.0])) == pytest.approx(0.25)


def test_gn_rejects_small_beta():
    with pytest.raises(InvalidShape):
        generalized_normal(0)


def test_gn_theta_helpers():
    assert gn_unit_variance_theta(1) == pytest.approx(0.5)
    b = 2
    ref = np.exp(2 * b * (gammaln(3 / (2 * b)) - gammaln(1 / (2 * b))))
    assert gn_reference_theta(b) == pytest.approx(ref, rel=1e-14)
    assert gn_reference_theta(b) == pytest.approx(gn_unit_variance_theta(b) ** 2, rel=1e-14)


# --- generalized gamma ------------------------------------------------------

def test_gg_examples():
    m = generalized_gamma(1)
    assert m.grad_x_log([1.0], np.array([1.0]))[0] == pytest.approx(0.0)
    assert m.mixed_score_field([1.0], 0).eval(np.array([3.0]))[0] == -6.0
    x = np.array([[0.7], [-1.2]])
    np.testing.assert_allclose(generalized_gamma(2).fisher_score([1.5], 0, x),
                               -x[:, 0] ** 2 + 5 / 3.0)


def test_gg_rejects_small_beta():
    with pytest.raises(InvalidShape):
        generalized_gamma(0.5)


# --- multivariate normal ----------------------------------------------------

def test_normal_examples():
    m = multivariate_normal(np.zeros(2), np.eye(2))
    th = m.default_theta
    x = np.array([[0.3, -1.1]])
    assert m.fisher_score(th, 0, x)[0] == pytest.approx(0.3)
    # Sigma_11 score at x=0 is -tr(S_11) = -1/2
    assert m.fisher_score(th, 2, np.zeros(2)) == pytest.approx(-0.5)
    assert m.param_names == ["mu1", "mu2", "Sigma11", "Sigma22", "Sigma12"]


def test_normal_rejects_non_spd():
    with pytest.raises(NotSPD):
        multivariate_normal(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


# --- PPI --------------------------------------------------------------------

def test_ppi_structure():
    m = ppi_model(np.full(3, -0.5))
    assert m.d == 5
    assert m.param_names == ["A11", "A22", "A12", "mu1", "mu2"]
    x = np.array([[0.6, 0.0, 0.8], [0.3, 0.4, np.sqrt(0.75)]])
    np.testing.assert_array_equal(m.b(x), 0.0)
    np.testing.assert_array_equal(m.grad_b(x), 0.0)


def test_ppi_t_gradient_example():
    m = ppi_model(np.full(3, -0.5))
    x = np.full((1, 3), 1 / np.sqrt(3))
    g = m.grad_t(x)[0, 2]
    s = 1 / np.sqrt(3)
    np.testing.assert_allclose(g, [4 * s / 3, 4 * s / 3, 0.0])


def test_ppi_log_unnorm_is_quadratic_form(rng):
    beta = np.array([0.3, -0.2, 0.5])
    m = ppi_model(beta)
    a = np.array([[1.0, 0.4, 0.0], [0.4, -0.5, 0.0], [0.0, 0.0, 0.0]])
    mu = np.array([0.2, -0.7, 0.0])
    th = m.pack(a, mu)
    x = np.abs(rng.normal(size=(5, 3)))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x2 = x * x
    want = np.einsum("mi,ij,mj->m", x2, a, x2) + x2 @ mu + np.log(x) @ (1 + 2 * beta)
    np.testing.assert_allclose(m.log_unnorm(th, x), want, rtol=1e-13)
    a2, mu2 = m.unpack(th)
    np.testing.assert_array_equal(a2, a)
    np.testing.assert_array_equal(mu2, mu)


def test_ppi_weight_gradient(rng):
    m = ppi_model(np.full(3, -0.5))
    x = np.abs(rng.normal(size=(4, 3))) + 0.1
    np.testing.assert_allclose(m.grad_weight(x), fd_grad(m.weight, x), rtol=1e-7)


def test_ppi_rejects_beta():
    with pytest.raises(InvalidShape):
        ppi_model(np.array([-1.0, 0.0, 0.0]))


def test_ppi_samples_in_domain(rng):
    m = ppi_model(np.full(3, -0.5))
    x = sample(m, m.default_theta, 200, rng)
    assert np.all(m.domain.contains(x))
    assert np.all(x > 0)


# --- matrix Bingham ---------------------------------------------------------

def test_bingham_examples():
    m = matrix_bingham(3, 2)
    assert m.param_names == ["A11", "A22", "A12", "A13", "A23"]
    x = np.eye(3)[:, :2].ravel()
    assert m.log_unnorm(m.default_theta, x) == pytest.approx(2.0)
    g = np.random.default_rng(3)
    q, _ = np.linalg.qr(g.normal(size=(3, 2)))
    assert m.log_unnorm(np.zeros(5), q.ravel()) == 0.0


def test_bingham_log_unnorm_trace(rng):
    m = matrix_bingham(3, 2)
    s = rng.normal(size=(3, 3))
    a = s + s.T
    a[2, 2] = 0.0
    q, _ = np.linalg.qr(rng.normal(size=(3, 2)))
    assert m.log_unnorm(m.pack(a), q.ravel()) == pytest.approx(np.trace(q.T @ a @ q), rel=1e-13)


def test_bingham_t_gradient_fd(rng):
    m = matrix_bingham(3, 2)
    x = rng.normal(size=(5, 6))
    for j in range(m.d):
        fd = fd_grad(lambda y: m.t(y)[:, j], x)
        np.testing.assert_allclose(m.grad_t(x)[:, j], fd, atol=1e-6)


def test_bingham_rejects_shape():
    with pytest.raises(InvalidShape):
        matrix_bingham(2, 2)


def test_missing_fisher():
    m = ppi_model(np.full(3, -0.5))
    with pytest.raises(MissingFisherScore):
        m.fisher_score(m.default_theta, 0, np.full(3, 1 / np.sqrt(3)))
