"""Binary logistic regression by Newton-Raphson.

Functional core (:func:`fit`, :func:`log_lik_at`, :func:`predict_proba`,
:func:`predictive_variance`) plus :class:`LogisticGLM`, a scikit-learn
compatible classifier wrapping it.  Every selection criterion reads its
likelihoods and Fisher information from here.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, log_expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

PROB_CLAMP = 1e-12
GRAD_TOL = 1e-8
MAX_ITER = 50
MAX_HALVINGS = 30
THETA_CAP = 1e4
ETA_SATURATION = 15.0


class GLMError(RuntimeError):
    pass


class QuasiSeparationError(GLMError):
    pass


class SingularInformationError(GLMError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Which feature columns enter the linear predictor."""

    covariate_subset: tuple
    include_intercept: bool = True
    model_id: int = 1

    def __post_init__(self):
        subset = tuple(int(j) for j in self.covariate_subset)
        if len(set(subset)) != len(subset) or any(j < 0 for j in subset):
            raise ValueError(f"invalid covariate subset {self.covariate_subset}")
        if not subset and not self.include_intercept:
            raise ValueError("model has no parameters")
        object.__setattr__(self, "covariate_subset", subset)

    @property
    def dim(self):
        return len(self.covariate_subset) + int(self.include_intercept)

    def design(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = X[:, list(self.covariate_subset)]
        if self.include_intercept:
            cols = np.column_stack([np.ones(X.shape[0]), cols])
        return cols

    def column_names(self, feature_names=None):
        names = ["intercept"] if self.include_intercept else []
        for j in self.covariate_subset:
            names.append(feature_names[j] if feature_names is not None else f"x{j}")
        return names

    def to_dict(self):
        return {
            "covariate_subset": list(self.covariate_subset),
            "include_intercept": self.include_intercept,
            "model_id": self.model_id,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["covariate_subset"]), d["include_intercept"], d["model_id"])


def full_model(n_features, model_id=1):
    return ModelSpec(tuple(range(n_features)), True, model_id)


@dataclass(frozen=True, eq=False)
class ModelFit:
    theta_hat: np.ndarray
    log_lik: float
    fisher: np.ndarray
    spec: ModelSpec
    converged: bool
    n_obs: int
    ridge: float = 0.0
    n_iter: int = field(default=0, compare=False)

    def to_dict(self):
        return {
            "theta_hat": self.theta_hat.tolist(),
            "log_lik": self.log_lik,
            "fisher": self.fisher.tolist(),
            "spec": self.spec.to_dict(),
            "converged": self.converged,
            "n_obs": self.n_obs,
            "ridge": self.ridge,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["theta_hat"], dtype=float),
            float(d["log_lik"]),
            np.asarray(d["fisher"], dtype=float),
            ModelSpec.from_dict(d["spec"]),
            bool(d["converged"]),
            int(d["n_obs"]),
            float(d["ridge"]),
            int(d.get("n_iter", 0)),
        )


def _check_binary(y):
    y = np.asarray(y)
    if y.size and not np.all((y == 0) | (y == 1)):
        raise GLMError("logistic GLM is binary only; labels must be 0/1")
    return y.astype(float)


def log_lik_at(X, y, spec, theta):
    """Clamped Bernoulli log-likelihood of (X, y) at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.dim,):
        raise ValueError(f"theta has shape {theta.shape}, model expects ({spec.dim},)")
    y = _check_binary(y)
    p = np.clip(expit(spec.design(X) @ theta), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def score_vector(X, y, spec, theta):
    Z = spec.design(X)
    return Z.T @ (_check_binary(y) - expit(Z @ theta))


def fisher_information(X, spec, theta):
    """Observed information X'WX, W = diag(p(1-p))."""
    Z = spec.design(X)
    p = expit(Z @ theta)
    return (Z * (p * (1.0 - p))[:, None]).T @ Z


def _objective(Z, y, theta, ridge):
    eta = Z @ theta
    return float(np.sum(y * log_expit(eta) + (1.0 - y) * log_expit(-eta))) - 0.5 * ridge * theta @ theta


def _collinear_columns(Z, names):
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    tol = s.max() * max(Z.shape) * np.finfo(float).eps if s.size else 0.0
    null = vt[s <= tol] if np.any(s <= tol) else vt[-1:]
    involved = np.flatnonzero(np.abs(null).max(axis=0) > 1e-8)
    return [names[j] for j in involved]


def fit(X, y, spec, ridge=0.0, theta0=None, max_iter=MAX_ITER, tol=GRAD_TOL, feature_names=None):
    """Maximise the (ridge-penalised) log-likelihood by damped Newton steps.

    ``converged`` is true iff the penalised score has max-norm below ``tol``.
    The returned Fisher information is the unpenalised X'WX at the optimum.
    """
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    y = _check_binary(y)
    Z = spec.design(X)
    n, q = Z.shape
    if n < 2:
        raise GLMError("need at least two observations")
    names = spec.column_names(feature_names)
    if ridge == 0:
        if len(np.unique(y)) < 2:
            raise QuasiSeparationError("only one class present; use ridge > 0")
        if np.linalg.matrix_rank(Z) < q:
            raise SingularInformationError(f"collinear columns: {_collinear_columns(Z, names)}")
    theta = np.zeros(q) if theta0 is None else np.array(theta0, dtype=float)
    obj = _objective(Z, y, theta, ridge)
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(Z @ theta)
        grad = Z.T @ (y - p) - ridge * theta
        if np.max(np.abs(grad)) < tol:
            break
        H = (Z * (p * (1.0 - p))[:, None]).T @ Z + ridge * np.eye(q)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        for _ in range(MAX_HALVINGS):
            cand = theta + t * step
            cand_obj = _objective(Z, y, cand, ridge)
            if cand_obj >= obj - 1e-12 * abs(obj):
                break
            t *= 0.5
        else:
            break
        theta, obj = cand, cand_obj
        if ridge == 0 and np.max(np.abs(theta)) > THETA_CAP:
            raise QuasiSeparationError(
                f"coefficients exceed {THETA_CAP:g} (quasi-separation); refit with ridge > 0"
            )
    p = expit(Z @ theta)
    converged = bool(np.max(np.abs(Z.T @ (y - p) - ridge * theta)) < tol)
    if ridge == 0 and np.max(np.abs(Z @ theta)) > ETA_SATURATION:
        raise QuasiSeparationError("fitted probabilities saturate (quasi-separation); refit with ridge > 0")
    fisher = fisher_information(X, spec, theta)
    fisher = 0.5 * (fisher + fisher.T)
    return ModelFit(
        theta_hat=theta,
        log_lik=log_lik_at(X, y, spec, theta),
        fisher=fisher,
        spec=spec,
        converged=converged,
        n_obs=n,
        ridge=float(ridge),
        n_iter=it,
    )


def augmented_max_log_lik(X, y, x_new, y_new, spec, ridge=0.0, theta0=None):
    """max over theta of the log-likelihood of D plus one extra row.

    Warm-started from ``theta0`` (typically the fit on D alone).
    """
    Xa = np.vstack([np.asarray(X, dtype=float), np.atleast_2d(x_new)])
    ya = np.append(np.asarray(y, dtype=float), float(y_new))
    return fit(Xa, ya, spec, ridge=ridge, theta0=theta0).log_lik


def predict_proba(model, X):
    """Class probabilities ``[P(y=0), P(y=1)]`` per row (1-D input gives one row)."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xm = np.atleast_2d(X)
    needed = max(model.spec.covariate_subset, default=-1) + 1
    if Xm.shape[1] < needed:
        raise ValueError(f"feature row has {Xm.shape[1]} entries, model needs {needed}")
    p1 = expit(model.spec.design(Xm) @ model.theta_hat)
    out = np.column_stack([1.0 - p1, p1])
    return out[0] if single else out


def linear_predictor_variance(fisher, z):
    """z' I^{-1} z for a design row ``z`` (intercept entry included)."""
    z = np.asarray(z, dtype=float)
    fisher = np.asarray(fisher, dtype=float)
    try:
        factor = cho_factor(fisher)
    except np.linalg.LinAlgError:
        raise SingularInformationError("information matrix is singular") from None
    diag = np.abs(np.diag(factor[0]))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise SingularInformationError("information matrix is singular")
    return float(max(z @ cho_solve(factor, z), 0.0))


def predictive_variance(model, x):
    """Delta-method variance of the linear predictor at feature row ``x``."""
    z = model.spec.design(np.atleast_2d(x))[0]
    return linear_predictor_variance(model.fisher, z)


class LogisticGLM(ClassifierMixin, BaseEstimator):
    """Binary logistic regression with an optional covariate subset.

    Parameters
    ----------
    covariates : sequence of int or None
        Feature columns in the linear predictor; ``None`` uses all of them.
    fit_intercept : bool
    ridge : float
        L2 penalty on all coefficients (intercept included).
    max_iter, tol : Newton iteration cap and score max-norm tolerance.

    Attributes
    ----------
    fit_ : ModelFit
    classes_, coef_, intercept_, n_features_in_
    """

    def __init__(self, covariates=None, fit_intercept=True, ridge=0.0, max_iter=MAX_ITER, tol=GRAD_TOL):
        self.covariates = covariates
        self.fit_intercept = fit_intercept
        self.ridge = ridge
        self.max_iter = max_iter
        self.tol = tol

    def _spec(self, n_features):
        cols = tuple(range(n_features)) if self.covariates is None else tuple(self.covariates)
        if any(j >= n_features for j in cols):
            raise ValueError(f"covariate index out of range for {n_features} features")
        return ModelSpec(cols, self.fit_intercept)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) > 2:
            raise ValueError("LogisticGLM is binary only")
        y01 = (y == self.classes_[-1]).astype(float)
        self.n_features_in_ = X.shape[1]
        self.fit_ = fit(X, y01, self._spec(X.shape[1]), ridge=self.ridge, max_iter=self.max_iter, tol=self.tol)
        theta = self.fit_.theta_hat
        self.intercept_ = theta[0] if self.fit_intercept else 0.0
        coef = np.zeros(X.shape[1])
        coef[list(self.fit_.spec.covariate_subset)] = theta[int(self.fit_intercept):]
        self.coef_ = coef
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        proba = predict_proba(self.fit_, X)
        if len(self.classes_) == 1:
            return proba[:, 1:]
        return proba

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def predictive_variance(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        return np.array([predictive_variance(self.fit_, row) for row in X])
