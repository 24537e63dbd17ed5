"""Pseudo-label selection criteria over a candidate x model x label utility tensor.

Utilities are log-scale throughout.  Every criterion returns a
:class:`SelectionResult` whose ``ranked`` list is sorted by descending score
with ties going to the lower candidate index.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_expit, logsumexp

from . import glm
from .evidence import LOG_CLAMP, ppp_base

BACKENDS = ("ppp", "max_likelihood", "max_likelihood_refit")
CRITERIA = (
    "prob_score",
    "variance",
    "likelihood_maxmax",
    "ppp",
    "multi_model_ppp",
    "occam_threshold",
    "multi_label",
    "full_bayes",
    "multi_data",
)
WEIGHT_TOL = 1e-9


class CriterionError(RuntimeError):
    pass


class EmptySelectionError(CriterionError):
    """No candidate clears the top threshold; the caller should lower it."""


@dataclass(frozen=True, eq=False)
class UtilityTensor:
    """values[i, k, j]: log utility of adding candidate i with label j under model k."""

    values: np.ndarray
    models: tuple
    label_arity: int
    predicted_label: np.ndarray
    predicted_proba: np.ndarray
    fits: tuple = ()
    pool: np.ndarray = None
    backend: str = "ppp"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[1] != len(self.models) or v.shape[2] != self.label_arity:
            raise ValueError(f"utility array shape {v.shape} inconsistent with {len(self.models)} models")
        if not np.all(np.isfinite(v)):
            raise ValueError("utility tensor has non-finite entries")
        proba = np.asarray(self.predicted_proba, dtype=float)
        labels = np.asarray(self.predicted_label, dtype=np.int64)
        if v.shape[0] and not np.array_equal(labels, np.argmax(proba, axis=1)):
            raise ValueError("predicted_label must be the argmax of predicted_proba")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "predicted_label", labels)
        object.__setattr__(self, "predicted_proba", proba)
        object.__setattr__(self, "models", tuple(self.models))

    @property
    def n_candidates(self):
        return self.values.shape[0]

    def predicted_utility(self):
        """(n, K) array values[i, k, h_i]."""
        n = self.n_candidates
        return self.values[np.arange(n), :, self.predicted_label]


@dataclass(frozen=True)
class SelectionResult:
    ranked: list
    selected: frozenset
    criterion_name: str
    audit: dict = field(default_factory=dict)

    @property
    def top(self):
        return self.ranked[0][0] if self.ranked else None


@dataclass(frozen=True)
class ThresholdConfig:
    """Occam thresholds; ``mode='quantile'`` reads tau/xi as per-model score quantiles."""

    tau: float = 0.5
    xi: float = 0.9
    mode: str = "quantile"

    def __post_init__(self):
        if not self.xi > self.tau:
            raise ValueError("xi must exceed tau")
        if self.mode not in ("quantile", "raw"):
            raise ValueError("mode must be 'quantile' or 'raw'")
        if self.mode == "quantile" and not (0.0 <= self.tau and self.xi <= 1.0):
            raise ValueError("quantile thresholds must lie in [0, 1]")

    def lowered(self, decay=0.5):
        """Thresholds relaxed for a refit after an empty selection."""
        if self.mode == "quantile":
            return ThresholdConfig(self.tau * decay, self.xi * decay, "quantile")
        step = float(np.log(decay))
        return ThresholdConfig(self.tau + step, self.xi + step, "raw")


def rank_scores(scores, candidates=None):
    scores = np.asarray(scores, dtype=float)
    idx = np.arange(scores.size) if candidates is None else np.asarray(candidates)
    order = np.lexsort((idx, -scores))
    return [(int(idx[o]), float(scores[o])) for o in order]


def _result(name, scores, n_select=1, audit=None, candidates=None, selected=None):
    ranked = rank_scores(scores, candidates)
    if selected is None:
        selected = [c for c, _ in ranked[:n_select]]
    return SelectionResult(ranked, frozenset(int(s) for s in selected), name, audit or {})


def candidate_log_lik(model, pool):
    """(n, 2) clamped log p(j | x_i, theta_hat) for both labels."""
    eta = model.spec.design(pool) @ model.theta_hat
    return np.maximum(np.column_stack([log_expit(-eta), log_expit(eta)]), LOG_CLAMP)


def build_tensor(X, y, pool, family, backend="ppp", ridge=0.0, include_candidate=True, feature_names=None):
    """Fit every model on the labeled data and score every (candidate, model, label).

    Pseudo-labels and their probabilities come from the last (largest) model.
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    pool = np.atleast_2d(np.asarray(pool, dtype=float))
    n = pool.shape[0]
    fits = []
    for spec in family:
        try:
            fits.append(glm.fit(X, y, spec, ridge=ridge, feature_names=feature_names))
        except glm.GLMError as exc:
            raise CriterionError(f"model {spec.model_id} {spec.column_names(feature_names)}: {exc}") from exc
    J = 2
    values = np.empty((n, len(family), J))
    for k, model in enumerate(fits):
        if backend == "max_likelihood_refit":
            for i in range(n):
                for j in range(J):
                    values[i, k, j] = glm.augmented_max_log_lik(
                        X, y, pool[i], j, model.spec, ridge=ridge, theta0=model.theta_hat
                    )
            continue
        point = candidate_log_lik(model, pool) if n else np.empty((0, J))
        if backend == "ppp":
            values[:, k, :] = ppp_base(model) + (2.0 * point if include_candidate else 0.0)
        else:
            values[:, k, :] = model.log_lik + point
    proba = glm.predict_proba(fits[-1], pool) if n else np.empty((0, J))
    return UtilityTensor(
        values=values,
        models=tuple(family),
        label_arity=J,
        predicted_label=np.argmax(proba, axis=1),
        predicted_proba=proba,
        fits=tuple(fits),
        pool=pool,
        backend=backend,
    )


def criterion_probability_score(tensor, n_select=1):
    scores = tensor.predicted_proba.max(axis=1) if tensor.n_candidates else np.empty(0)
    return _result("prob_score", scores, n_select)


def criterion_variance(tensor, n_select=1):
    """Rank by negated delta-method variance of the full model's linear predictor."""
    model = tensor.fits[-1]
    keep, scores, audit = [], [], {}
    for i, x in enumerate(tensor.pool):
        try:
            var = glm.predictive_variance(model, x)
        except glm.SingularInformationError as exc:
            audit[i] = {"excluded": str(exc)}
            continue
        keep.append(i)
        scores.append(-var)
        audit[i] = {"variance": var}
    return _result("variance", scores, n_select, audit, candidates=keep)


def criterion_single_model(tensor, model_index=-1, n_select=1, name=None):
    scores = tensor.predicted_utility()[:, model_index]
    return _result(name or ("ppp" if tensor.backend == "ppp" else "likelihood_maxmax"), scores, n_select)


def default_model_weights(models):
    """w_k proportional to dim(Theta_k) / dim(Theta_K)."""
    dims = np.array([m.dim for m in models], dtype=float)
    w = dims / dims[-1]
    return w / w.sum()


def _check_weights(w, size, what):
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != size:
        raise ValueError(f"{what} need {size} entries, got {w.shape[-1]}")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError(f"{what} must lie in [0, 1]")
    if np.any(np.abs(w.sum(axis=-1) - 1.0) > WEIGHT_TOL):
        raise ValueError(f"{what} must sum to 1")
    return w


def multi_model_scores(tensor, weights=None, normalize=False):
    """log sum_k w_k exp(u_ik), each model's column optionally rescaled first.

    Rescaling divides model k's raw utilities by their sum over candidates,
    a positive per-model factor that keeps the log-likelihood offsets of
    bigger models from swamping the mixture.
    """
    K = len(tensor.models)
    w = default_model_weights(tensor.models) if weights is None else _check_weights(weights, K, "model weights")
    u = tensor.predicted_utility()
    if normalize and u.shape[0]:
        u = u - logsumexp(u, axis=0, keepdims=True)
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    return logsumexp(u + logw[None, :], axis=1), u, w


def criterion_multi_model_weighted(tensor, weights=None, n_select=1, normalize=False):
    scores, parts, w = multi_model_scores(tensor, weights, normalize)
    audit = {i: {"per_model": parts[i].tolist(), "weights": w.tolist()} for i in range(len(scores))}
    return _result("multi_model_ppp", scores, n_select, audit)


def phi_threshold(scores, thresholds):
    """0 if some score is below tau, 1 if all reach xi, 0.5 otherwise."""
    scores = np.asarray(scores, dtype=float)
    if not thresholds.xi > thresholds.tau:
        raise ValueError("xi must exceed tau")
    if np.any(scores < thresholds.tau):
        return 0.0
    if np.all(scores >= thresholds.xi):
        return 1.0
    return 0.5


def occam_sets(upper_sets):
    """Walk nested models from largest to smallest, intersecting the upper sets.

    ``upper_sets[k]`` is S_k for model k (index 0 = smallest).  Returns the
    last non-empty running intersection and the model indices visited.
    """
    K = len(upper_sets)
    running = set(upper_sets[-1])
    if not running:
        raise EmptySelectionError("no candidate reaches xi under the largest model; lower the threshold")
    visited = [K - 1]
    for k in range(K - 2, -1, -1):
        nxt = running & set(upper_sets[k])
        if not nxt:
            break
        running = nxt
        visited.append(k)
    return running, visited


def occam_thresholds(tensor, thresholds):
    """Per-model (tau_k, xi_k) on the log-utility scale."""
    u = tensor.predicted_utility()
    if thresholds.mode == "raw":
        K = u.shape[1]
        return np.full(K, thresholds.tau), np.full(K, thresholds.xi)
    return np.quantile(u, thresholds.tau, axis=0), np.quantile(u, thresholds.xi, axis=0)


def criterion_threshold_occam(tensor, thresholds=None):
    """Reversed Occam's razor over a nested family ordered smallest to largest."""
    thresholds = thresholds or ThresholdConfig()
    u = tensor.predicted_utility()
    tau, xi = occam_thresholds(tensor, thresholds)
    upper = [set(np.flatnonzero(u[:, k] >= xi[k]).tolist()) for k in range(u.shape[1])]
    selected, visited = occam_sets(upper)
    audit = {
        "visited_models": [tensor.models[k].model_id for k in visited],
        "upper_sets": {tensor.models[k].model_id: sorted(upper[k]) for k in range(len(upper))},
        "tau": tau.tolist(),
        "xi": xi.tolist(),
    }
    audit["phi"] = {i: _phi_per_model(u[i], tau, xi) for i in range(u.shape[0])}
    return _result("occam_threshold", u[:, -1], audit=audit, selected=selected)


def _phi_per_model(scores, tau, xi):
    if np.any(scores < tau):
        return 0.0
    if np.all(scores >= xi):
        return 1.0
    return 0.5


def _label_weights(tensor, weights):
    if weights is None:
        return tensor.predicted_proba
    return _check_weights(np.atleast_2d(weights), tensor.label_arity, "label weights")


def criterion_multi_label(tensor, weights=None, n_select=1, model_index=-1):
    """log sum_j w_ij exp(u_ikj) for the chosen model k."""
    w = _label_weights(tensor, weights)
    u = tensor.values[:, model_index, :]
    with np.errstate(divide="ignore"):
        scores = logsumexp(u + np.log(w), axis=1)
    return _result("multi_label", scores, n_select)


def criterion_full_bayes(tensor, rho=None, n_select=1, model_index=-1):
    """Expected Bayes score over labels drawn from ``rho``, per candidate.

    Computed as an explicit outer expectation of the inner per-label
    utilities (shifted by a global constant for stability), then mapped back
    to the log scale.  The audit records each candidate's best label on the
    extended action space of (x, y) pairs.
    """
    rho = _label_weights(tensor, rho)
    u = tensor.values[:, model_index, :]
    shift = float(u.max()) if u.size else 0.0
    scores = np.empty(u.shape[0])
    audit = {}
    for i in range(u.shape[0]):
        total = 0.0
        for j in range(u.shape[1]):
            total += rho[i, j] * np.exp(u[i, j] - shift)
        scores[i] = np.log(total) + shift if total > 0 else -np.inf
        best = int(np.argmax(u[i]))
        audit[i] = {"best_label": best, "best_pair_utility": float(u[i, best])}
    return _result("full_bayes", scores, n_select, audit)


def criterion_multi_data(tensor_d, tensor_dprime, aggregation="min", n_select=1, model_index=-1):
    """Bi-objective selection over utilities under D and a resampled D'."""
    if tensor_d.n_candidates != tensor_dprime.n_candidates:
        raise CriterionError("both tensors must score the same candidates")
    n = tensor_d.n_candidates
    h = tensor_d.predicted_label
    a = tensor_d.values[np.arange(n), model_index, h]
    b = tensor_dprime.values[np.arange(n), model_index, h]
    scores = np.minimum(a, b)
    audit = {i: {"D": float(a[i]), "D_prime": float(b[i])} for i in range(n)}
    if aggregation == "min":
        return _result("multi_data", scores, n_select, audit)
    if aggregation != "gsd":
        raise ValueError("aggregation must be 'min' or 'gsd'")
    from .gsd import DominanceInstance, solution_set_pi

    inst = DominanceInstance.from_log_utilities(np.column_stack([a, b])[:, None, :])
    verdict = solution_set_pi(inst, np.ones(1))
    keep = sorted(verdict.nondominated)
    ranked_keep = [c for c, _ in rank_scores(scores[keep], keep)][:n_select]
    return _result("multi_data", scores, audit=audit, selected=ranked_keep) if n else _result(
        "multi_data", scores, audit=audit, selected=[]
    )


def resample_pseudo_labeled(X, y, pool, labels, size, rng):
    """D' = D plus ``size`` pool rows drawn without replacement with their pseudo-labels."""
    pool = np.atleast_2d(pool)
    size = min(int(size), pool.shape[0])
    pick = sorted(rng.permutation(pool.shape[0])[:size])
    Xp = np.vstack([X, pool[pick]]) if pick else np.asarray(X)
    yp = np.concatenate([np.asarray(y), np.asarray(labels)[pick]]) if pick else np.asarray(y)
    return Xp, yp
