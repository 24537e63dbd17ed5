"""Pseudo posterior predictive scores and marginal likelihoods.

Three routes to the same kind of quantity:

* :func:`ppp_approx` -- closed form from the ML fit (what the selection loop uses);
* :func:`ppp_exact` -- tensor-grid trapezoid quadrature, dim <= 2 (test oracle);
* :func:`laplace_evidence` -- Laplace-approximated log marginal likelihood
  under a Gaussian prior (feeds the credal alpha-cuts).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_expit, logsumexp
from scipy.stats import norm, qmc

from .glm import GLMError, SingularInformationError, _check_binary

LOG_CLAMP = math.log(1e-12)


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Isotropic Gaussian prior N(mean, scale^2 I) on the coefficients.

    ``mean`` may be a scalar (broadcast), a vector of the model's own
    dimension, or a vector over the full parameter layout
    ``[intercept, x0, x1, ...]`` which is projected onto a sub-model.
    """

    prior_id: int
    mean: np.ndarray
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("prior scale must be positive")
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))

    def mean_for(self, spec):
        m = self.mean
        if m.size == 1:
            return np.full(spec.dim, m[0])
        if m.size == spec.dim:
            return m.copy()
        idx = ([0] if spec.include_intercept else []) + [1 + j for j in spec.covariate_subset]
        if max(idx) >= m.size:
            raise ValueError(f"prior mean of length {m.size} does not cover model {spec}")
        return m[idx]

    def log_density(self, theta, spec):
        theta = np.atleast_2d(theta)
        z = (theta - self.mean_for(spec)) / self.scale
        q = theta.shape[1]
        return -0.5 * np.sum(z * z, axis=1) - q * (math.log(self.scale) + 0.5 * math.log(2 * math.pi))

    def to_dict(self):
        return {"prior_id": self.prior_id, "mean": self.mean.tolist(), "scale": self.scale}


@dataclass(frozen=True)
class PppScore:
    candidate_idx: int
    model_id: int
    label_idx: int
    value: float


@dataclass(frozen=True)
class Evidence:
    prior_id: int
    model_id: int
    log_marginal: float


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor trapezoid grid on the box [lower, upper] with ``n_points`` per axis."""

    lower: tuple
    upper: tuple
    n_points: int = 201

    def nodes(self):
        axes = [np.linspace(lo, hi, self.n_points) for lo, hi in zip(self.lower, self.upper)]
        if len(axes) > 2:
            raise ValueError("quadrature grids are limited to dim <= 2")
        w1 = []
        for ax in axes:
            h = ax[1] - ax[0]
            w = np.full(ax.size, h)
            w[[0, -1]] = h / 2
            w1.append(w)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
        wmesh = np.meshgrid(*w1, indexing="ij")
        weights = np.prod(np.column_stack([m.ravel() for m in wmesh]), axis=1)
        return pts, np.log(weights)

    def refined(self):
        return QuadratureGrid(self.lower, self.upper, 2 * self.n_points - 1)


def point_log_lik(model, x, label):
    """Clamped log p(label | x, theta_hat) for one candidate row."""
    eta = float(model.spec.design(np.atleast_2d(x))[0] @ model.theta_hat)
    value = log_expit(eta) if label == 1 else log_expit(-eta)
    return max(float(value), LOG_CLAMP)


def _logdet_information(model):
    sign, logdet = np.linalg.slogdet(model.fisher)
    if sign <= 0 or not np.isfinite(logdet):
        raise SingularInformationError("Fisher information is singular; log-determinant undefined")
    return float(logdet)


def ppp_base(model):
    """Candidate-independent part 2 l(theta_hat) - 1/2 log|I(theta_hat)|."""
    return 2.0 * model.log_lik - 0.5 * _logdet_information(model)


def ppp_approx(model, x, label, candidate_idx=0, include_candidate=True):
    """Closed-form log PPP of adding (x, label) to the data behind ``model``.

    With ``include_candidate`` the candidate's own log-likelihood at
    theta_hat enters the doubled term; without it every candidate gets the
    same score.
    """
    if not model.converged and model.ridge == 0:
        raise GLMError("ppp_approx needs a converged fit")
    value = ppp_base(model)
    if include_candidate:
        value += 2.0 * point_log_lik(model, x, label)
    return PppScore(int(candidate_idx), model.spec.model_id, int(label), value)


def _log_lik_grid(X, y, spec, thetas):
    eta = spec.design(X) @ thetas.T
    y = _check_binary(y)[:, None]
    return np.sum(y * log_expit(eta) + (1.0 - y) * log_expit(-eta), axis=0)


def _label_log_lik_grid(X, labels, spec, thetas):
    eta = spec.design(X) @ thetas.T
    labels = np.asarray(labels)[:, None]
    return np.where(labels == 1, log_expit(eta), log_expit(-eta))


def map_estimate(X, y, spec, prior, max_iter=100, tol=1e-10):
    """Posterior mode and negative log-posterior Hessian under a Gaussian prior."""
    Z = spec.design(X)
    yv = _check_binary(y)
    mu = prior.mean_for(spec)
    prec = 1.0 / prior.scale**2
    theta = mu.copy()

    def log_joint(t):
        eta = Z @ t
        return float(np.sum(yv * log_expit(eta) + (1 - yv) * log_expit(-eta))) - 0.5 * prec * np.sum((t - mu) ** 2)

    current = log_joint(theta)
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-(Z @ theta)))
        grad = Z.T @ (yv - p) - prec * (theta - mu)
        H = (Z * (p * (1 - p))[:, None]).T @ Z + prec * np.eye(Z.shape[1])
        if np.max(np.abs(grad)) < tol:
            return theta, H
        step = np.linalg.solve(H, grad)
        t = 1.0
        for _ in range(40):
            cand = theta + t * step
            val = log_joint(cand)
            if val >= current - 1e-12 * abs(current):
                break
            t *= 0.5
        theta, current = cand, val
    p = 1.0 / (1.0 + np.exp(-(Z @ theta)))
    grad = Z.T @ (yv - p) - prec * (theta - mu)
    if np.max(np.abs(grad)) > 1e-6:
        raise GLMError("MAP Newton iteration did not converge")
    H = (Z * (p * (1 - p))[:, None]).T @ Z + prec * np.eye(Z.shape[1])
    return theta, H


def default_grid(X, y, spec, prior, n_points=201, width=10.0):
    """Box of +-``width`` Laplace posterior sds around the MAP."""
    if spec.dim > 2:
        raise ValueError("quadrature grids are limited to dim <= 2")
    mode, H = map_estimate(X, y, spec, prior)
    sd = np.sqrt(np.diag(np.linalg.inv(H)))
    return QuadratureGrid(tuple(mode - width * sd), tuple(mode + width * sd), n_points)


def ppp_exact(X, y, x, label, spec, prior, grid=None):
    """log p(D + (x, label)) - log p(D) under ``prior`` by trapezoid quadrature."""
    if spec.dim > 2:
        raise ValueError("ppp_exact supports models with at most 2 parameters")
    grid = grid or default_grid(X, y, spec, prior)
    thetas, logw = grid.nodes()
    base = _log_lik_grid(X, y, spec, thetas) + prior.log_density(thetas, spec) + logw
    extra = _label_log_lik_grid(np.atleast_2d(x), [label], spec, thetas)[0]
    return float(logsumexp(base + extra) - logsumexp(base))


def laplace_log_evidence(log_joint, grad, hess, theta0, max_iter=100, tol=1e-10):
    """Generic Laplace approximation: log_joint(mode) + q/2 log 2pi - 1/2 log|-H|.

    ``log_joint`` is log likelihood plus log prior; ``hess`` its Hessian.
    """
    theta = np.atleast_1d(np.asarray(theta0, dtype=float))
    current = log_joint(theta)
    for _ in range(max_iter):
        g = grad(theta)
        if np.max(np.abs(g)) < tol:
            break
        step = np.linalg.solve(-hess(theta), g)
        t = 1.0
        for _ in range(40):
            cand = theta + t * step
            val = log_joint(cand)
            if val >= current - 1e-12 * abs(current):
                break
            t *= 0.5
        theta, current = cand, val
    else:
        if np.max(np.abs(grad(theta))) > 1e-6:
            raise GLMError("MAP Newton iteration diverged")
    sign, logdet = np.linalg.slogdet(-hess(theta))
    if sign <= 0:
        raise GLMError("negative log-posterior Hessian is not positive definite at the mode")
    q = theta.size
    return float(log_joint(theta) + 0.5 * q * math.log(2 * math.pi) - 0.5 * logdet)


def laplace_evidence(X, y, spec, prior):
    """Laplace log marginal likelihood of (X, y) under ``spec`` and ``prior``."""
    mode, H = map_estimate(X, y, spec, prior)
    yv = _check_binary(y)
    eta = spec.design(X) @ mode
    loglik = float(np.sum(yv * log_expit(eta) + (1 - yv) * log_expit(-eta)))
    log_prior = float(prior.log_density(mode, spec)[0])
    sign, logdet = np.linalg.slogdet(H)
    if sign <= 0:
        raise GLMError("posterior Hessian is not positive definite")
    value = loglik + log_prior + 0.5 * spec.dim * math.log(2 * math.pi) - 0.5 * logdet
    return Evidence(prior.prior_id, spec.model_id, float(value))


def _gaussian_draws(mode, H, n_draws):
    sampler = qmc.Halton(d=mode.size, scramble=False)
    u = sampler.random(n_draws + 1)[1:]
    z = norm.ppf(u)
    L = np.linalg.cholesky(np.linalg.inv(H))
    return mode + z @ L.T


def posterior_predictive_table(X, y, X_pool, labels, spec, priors, n_points=201, n_draws=1000):
    """log E_post[p(label_i | x_i, theta)] for every prior (rows) and candidate (columns).

    Grid quadrature when the model has at most two parameters, otherwise a
    Laplace-Gaussian posterior integrated with deterministic Halton draws.
    """
    out = np.empty((len(priors), len(X_pool)))
    for r, prior in enumerate(priors):
        if spec.dim <= 2:
            thetas, logw = default_grid(X, y, spec, prior, n_points=n_points).nodes()
            base = _log_lik_grid(X, y, spec, thetas) + prior.log_density(thetas, spec) + logw
            base = base - logsumexp(base)
        else:
            mode, H = map_estimate(X, y, spec, prior)
            thetas = _gaussian_draws(mode, H, n_draws)
            base = np.full(len(thetas), -math.log(len(thetas)))
        extra = _label_log_lik_grid(X_pool, labels, spec, thetas)
        out[r] = logsumexp(base[None, :] + extra, axis=1)
    return out
