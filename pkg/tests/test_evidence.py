import math

import numpy as np
import pytest
from scipy.stats import kendalltau, multivariate_normal

from rpls import glm
from rpls.dataset import generate_binomial
from rpls.evidence import (
    PriorSpec,
    QuadratureGrid,
    default_grid,
    laplace_evidence,
    laplace_log_evidence,
    posterior_predictive_table,
    ppp_approx,
    ppp_exact,
)

SYM_X = np.array([[0.0], [0.0], [1.0], [1.0]])
SYM_Y = np.array([0, 1, 0, 1])
SLOPE_ONLY = glm.ModelSpec((0,), include_intercept=False)


def test_symmetric_base_value():
    m = glm.fit(SYM_X, SYM_Y, glm.full_model(1))
    base = ppp_approx(m, [0.0], 1, include_candidate=False).value
    assert base == pytest.approx(2 * 4 * math.log(0.5) - 0.5 * math.log(0.25), abs=1e-12)
    assert base == pytest.approx(-4.8520, abs=1e-4)
    full = ppp_approx(m, [0.0], 1).value
    assert full - base == pytest.approx(2 * math.log(0.5), abs=1e-12)


def test_identical_candidates_score_identically():
    m = glm.fit(SYM_X, SYM_Y, glm.full_model(1))
    assert ppp_approx(m, [0.3], 1, 0).value == ppp_approx(m, [0.3], 1, 7).value


def test_singular_fisher_rejected():
    m = glm.fit(SYM_X, SYM_Y, glm.full_model(1))
    bad = glm.ModelFit(m.theta_hat, m.log_lik, np.zeros((2, 2)), m.spec, True, 4)
    with pytest.raises(glm.SingularInformationError):
        ppp_approx(bad, [0.0], 1)


def _one_param_problem(seed):
    data = generate_binomial(6, [1.2], 0.0, seed=seed)
    X, y = data.features, data.labels
    try:
        model = glm.fit(X, y, SLOPE_ONLY)
    except glm.GLMError:
        return None
    return X, y, model


def test_approx_ranking_matches_quadrature():
    flat = PriorSpec(0, [0.0], 100.0)
    pool = np.linspace(-2.5, 2.5, 9)[:, None]
    checked = 0
    for seed in range(40):
        prob = _one_param_problem(seed)
        if prob is None:
            continue
        X, y, model = prob
        approx = [ppp_approx(model, x, 1).value for x in pool]
        exact = [ppp_exact(X, y, x, 1, SLOPE_ONLY, flat) for x in pool]
        assert int(np.argmax(approx)) == int(np.argmax(exact))
        assert kendalltau(approx, exact).statistic == pytest.approx(1.0)
        checked += 1
    assert checked >= 10


def test_exact_prefers_observed_label_over_flip():
    X = np.array([[-1.0], [-0.5], [0.5], [1.0], [1.5], [-1.5]])
    y = np.array([0, 1, 1, 1, 0, 0])
    flat = PriorSpec(0, [0.0], 100.0)
    x = X[3]
    assert ppp_exact(X, y, x, 1, SLOPE_ONLY, flat) >= ppp_exact(X, y, x, 0, SLOPE_ONLY, flat)


def test_point_mass_prior_limit():
    X = np.array([[-1.0], [0.5], [2.0]])
    y = np.array([0, 1, 1])
    theta0 = 0.7
    prior = PriorSpec(0, [theta0], 1e-3)
    x = np.array([1.3])
    expected = -math.log1p(math.exp(-theta0 * 1.3))
    assert ppp_exact(X, y, x, 1, SLOPE_ONLY, prior) == pytest.approx(expected, abs=1e-3)


def test_grid_refinement_converges():
    data = generate_binomial(30, [1.0], 0.5, seed=2)
    spec = glm.full_model(1)
    prior = PriorSpec(0, [0.0], 3.0)
    grid = default_grid(data.features, data.labels, spec, prior)
    a = ppp_exact(data.features, data.labels, data.features[0], 1, spec, prior, grid)
    b = ppp_exact(data.features, data.labels, data.features[0], 1, spec, prior, grid.refined())
    assert abs(a - b) < 1e-6


def test_exact_rejects_high_dim():
    data = generate_binomial(30, [1.0, 1.0], seed=2)
    with pytest.raises(ValueError):
        ppp_exact(data.features, data.labels, data.features[0], 1, glm.full_model(2), PriorSpec(0, [0.0], 1.0))
    with pytest.raises(ValueError):
        QuadratureGrid((0, 0, 0), (1, 1, 1), 5).nodes()


def test_generic_laplace_exact_for_gaussian():
    rng = np.random.default_rng(0)
    sigma, mu0, tau = 1.3, 0.4, 2.0
    x = rng.normal(1.0, sigma, size=12)

    def log_joint(t):
        t = t[0]
        return float(-0.5 * np.sum((x - t) ** 2) / sigma**2 - len(x) * math.log(sigma * math.sqrt(2 * math.pi))
                     - 0.5 * (t - mu0) ** 2 / tau**2 - math.log(tau * math.sqrt(2 * math.pi)))

    def grad(t):
        return np.array([np.sum(x - t[0]) / sigma**2 - (t[0] - mu0) / tau**2])

    def hess(t):
        return np.array([[-len(x) / sigma**2 - 1 / tau**2]])

    closed = multivariate_normal(np.full(len(x), mu0), sigma**2 * np.eye(len(x)) + tau**2).logpdf(x)
    assert laplace_log_evidence(log_joint, grad, hess, [0.0]) == pytest.approx(closed, abs=1e-6)


def test_laplace_evidence_close_to_quadrature():
    data = generate_binomial(60, [1.5], 0.3, seed=3)
    spec = glm.full_model(1)
    prior = PriorSpec(0, [0.0], 3.0)
    grid = default_grid(data.features, data.labels, spec, prior, n_points=301)
    thetas, logw = grid.nodes()
    from scipy.special import logsumexp

    eta = spec.design(data.features) @ thetas.T
    y = data.labels[:, None]
    ll = np.sum(y * -np.logaddexp(0, -eta) + (1 - y) * -np.logaddexp(0, eta), axis=0)
    exact = logsumexp(ll + prior.log_density(thetas, spec) + logw)
    assert laplace_evidence(data.features, data.labels, spec, prior).log_marginal == pytest.approx(exact, abs=0.05)


def test_evidence_prefers_matching_prior():
    data = generate_binomial(40, [1.0], 0.0, seed=9)
    spec = glm.full_model(1)
    mle = glm.fit(data.features, data.labels, spec).theta_hat
    wide = laplace_evidence(data.features, data.labels, spec, PriorSpec(0, mle, 50.0)).log_marginal
    wide_at_mle = laplace_evidence(data.features, data.labels, spec, PriorSpec(1, mle, 1.0)).log_marginal
    distant = laplace_evidence(data.features, data.labels, spec, PriorSpec(2, mle + 8.0, 0.05)).log_marginal
    assert wide_at_mle > distant
    assert wide > distant


def test_identical_priors_identical_evidence():
    data = generate_binomial(40, [1.0], seed=9)
    spec = glm.full_model(1)
    a = laplace_evidence(data.features, data.labels, spec, PriorSpec(0, [0.0], 2.0))
    b = laplace_evidence(data.features, data.labels, spec, PriorSpec(0, [0.0], 2.0))
    assert a == b


def test_matching_prior_keeps_rank_as_n_grows():
    spec = glm.full_model(1)
    for n in (20, 40, 80, 160):
        data = generate_binomial(n, [1.0], 0.0, seed=4)
        mle = glm.fit(data.features, data.labels, spec).theta_hat
        near = laplace_evidence(data.features, data.labels, spec, PriorSpec(0, mle, 1.0)).log_marginal
        far = laplace_evidence(data.features, data.labels, spec, PriorSpec(1, [3.0, -3.0], 1.0)).log_marginal
        assert near > far


def test_prior_projection_onto_submodel():
    prior = PriorSpec(0, [1.0, 2.0, 3.0, 4.0], 1.0)
    assert prior.mean_for(glm.ModelSpec((2,))).tolist() == [1.0, 4.0]
    assert prior.mean_for(glm.ModelSpec((0, 1, 2))).tolist() == [1.0, 2.0, 3.0, 4.0]
    assert PriorSpec(1, 0.5, 1.0).mean_for(glm.ModelSpec((0, 1))).tolist() == [0.5, 0.5, 0.5]
    with pytest.raises(ValueError):
        PriorSpec(0, [0.0], 0.0)


def test_posterior_predictive_table_matches_exact():
    data = generate_binomial(30, [1.0], 0.2, seed=5)
    spec = glm.full_model(1)
    priors = [PriorSpec(0, [0.0], 1.0), PriorSpec(1, [1.0], 0.5)]
    pool = data.features[:4]
    labels = [1, 0, 1, 1]
    table = posterior_predictive_table(data.features, data.labels, pool, labels, spec, priors)
    for p, prior in enumerate(priors):
        for i in range(4):
            assert table[p, i] == pytest.approx(
                ppp_exact(data.features, data.labels, pool[i], labels[i], spec, prior), abs=1e-9
            )


def test_posterior_predictive_table_high_dim_close_to_plug_in():
    data = generate_binomial(200, [1.0, -1.0, 0.5], 0.0, seed=5)
    spec = glm.full_model(3)
    table = posterior_predictive_table(data.features, data.labels, data.features[:3], [1, 1, 0], spec,
                                       [PriorSpec(0, [0.0], 10.0)])
    m = glm.fit(data.features, data.labels, spec)
    plug = np.log(glm.predict_proba(m, data.features[:3])[[0, 1, 2], [1, 1, 0]])
    assert np.all(np.isfinite(table))
    assert np.allclose(table[0], plug, atol=0.1)
