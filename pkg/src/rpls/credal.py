"""Finite sets of Gaussian priors: Gamma-maximin, alpha-cuts and prediction regret.

A credal set is a list of :class:`PriorSpec`; every lower/upper expectation
is taken over that finite list (its extreme points).
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .criteria import SelectionResult, rank_scores
from .evidence import PriorSpec, posterior_predictive_table

ALPHA_FLOOR = 0.01
DEFAULT_SCALES = (0.5, 1.0, 2.0, 5.0)


def prior_grid(centers, scales=DEFAULT_SCALES, offsets=(0.0,)):
    """Isotropic Gaussian priors on a lattice: each center shifted by each offset, times each scale.

    ``centers`` are mean vectors in the full layout ``[intercept, x0, ...]``.
    """
    priors = []
    for center in centers:
        center = np.atleast_1d(np.asarray(center, dtype=float))
        for off in offsets:
            for scale in scales:
                priors.append(PriorSpec(len(priors), center + off, float(scale)))
    return priors


@dataclass(frozen=True)
class RegretReport:
    label_regret: np.ndarray
    model_regret: np.ndarray
    total_regret: np.ndarray
    expected_total: dict = field(default_factory=dict)


def gamma_maximin(expectations, n_select=1, prior_ids=None):
    """Rank candidates by their worst expectation over priors.

    ``expectations[p, i]`` is candidate i's expected utility under prior p.
    """
    table = np.atleast_2d(np.asarray(expectations, dtype=float))
    if table.shape[0] == 0:
        raise ValueError("empty prior set")
    lower = table.min(axis=0)
    worst = np.argmin(table, axis=0)
    ids = list(range(table.shape[0])) if prior_ids is None else list(prior_ids)
    audit = {i: {"worst_prior": ids[int(worst[i])], "per_prior": table[:, i].tolist()} for i in range(table.shape[1])}
    ranked = rank_scores(lower)
    return SelectionResult(ranked, frozenset(c for c, _ in ranked[:n_select]), "gamma_maximin", audit)


def gamma_maximin_posterior(X, y, pool, labels, spec, priors, n_select=1):
    """Gamma-maximin over posterior predictive probabilities of the pseudo-labels."""
    if not priors:
        raise ValueError("empty prior set")
    table = posterior_predictive_table(X, y, pool, labels, spec, priors)
    return gamma_maximin(table, n_select, [p.prior_id for p in priors])


def alpha_cut(priors, log_evidence, alpha):
    """Priors whose evidence is at least ``alpha`` times the largest; never empty."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    ev = np.asarray([log_evidence[p.prior_id] if isinstance(log_evidence, dict) else log_evidence[k]
                     for k, p in enumerate(priors)], dtype=float)
    if not np.all(np.isfinite(ev)):
        raise ValueError("evidences must be finite")
    cut = math.log(alpha) + ev.max()
    return [p for p, e in zip(priors, ev) if e >= cut or e == ev.max()]


def regret_alpha_cut(priors, log_evidence_table, alpha, used=(0, 0)):
    """Priors under which the used (label, model) pair keeps evidence within alpha of the best.

    ``log_evidence_table[p, j, k]`` is log m(l_jk, prior p); ``used`` = (h_j, h_k).
    The supremum runs jointly over labels, models and priors, so that with a
    single label and model the rule is the plain alpha-cut.  Returns
    ``(retained, audit)``; an empty cut falls back to :func:`alpha_cut` on the
    used pair's evidence and sets ``audit['fallback']``.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    table = np.asarray(log_evidence_table, dtype=float)
    hj, hk = used
    used_ev = table[:, hj, hk]
    cut = math.log(alpha) + table.max()
    retained = [p for p, e in zip(priors, used_ev) if e >= cut]
    audit = {"fallback": False, "threshold": cut}
    if not retained:
        audit["fallback"] = True
        retained = alpha_cut(priors, list(used_ev), alpha)
    return retained, audit


def compute_regret(log_u, weights, used=(0, 0), prior_ids=None):
    """Label, model and total regret of the used (label, model) pair on a state grid.

    ``log_u[j, k, s]`` is the log utility of label j under model k at state s;
    ``weights[p, s]`` are per-prior probabilities over the states.
    """
    log_u = np.asarray(log_u, dtype=float)
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    hj, hk = used
    base = log_u[hj, hk]
    r_l = np.exp(log_u[:, hk, :].max(axis=0) - base)
    r_m = np.exp(log_u[hj, :, :].max(axis=0) - base)
    r = np.exp(log_u.max(axis=(0, 1)) - base)
    ids = list(range(len(W))) if prior_ids is None else list(prior_ids)
    expected = {pid: float(w @ r) for pid, w in zip(ids, W)}
    return RegretReport(r_l, r_m, r, expected)


def log_evidence_table(log_u, weights):
    """log m(l_jk, pi) = log sum_s pi_s u_jk(s) for every prior, label and model."""
    log_u = np.asarray(log_u, dtype=float)
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    with np.errstate(divide="ignore"):
        logw = np.log(W)
    return logsumexp(log_u[None, :, :, :] + logw[:, None, None, :], axis=3)


def check_regret_guarantee(log_u, weights, alpha, used=(0, 0)):
    """Evaluate the 1/alpha bound on expected total regret over the regret alpha-cut.

    Also reports the ratio of expectations sup_jk E u_jk / E u_hh, which the
    cut bounds by 1/alpha by construction.
    """
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    table = log_evidence_table(log_u, W)
    priors = [PriorSpec(p, [0.0], 1.0) for p in range(len(W))]
    retained, audit = regret_alpha_cut(priors, table, alpha, used)
    keep = [p.prior_id for p in retained]
    report = compute_regret(log_u, W[keep], used, keep)
    hj, hk = used
    ratio = {p: float(np.exp(table[p].max() - table[p, hj, hk])) for p in keep}
    worst = max(report.expected_total.values())
    worst_ratio = max(ratio.values())
    bound = 1.0 / alpha
    return {
        "retained": keep,
        "fallback": audit["fallback"],
        "max_expected_regret": worst,
        "max_expectation_ratio": worst_ratio,
        "bound": bound,
        "holds": bool(worst <= bound + 1e-9),
        "ratio_holds": bool(worst_ratio <= bound + 1e-9),
    }


def adaptive_alpha(history, floor=ALPHA_FLOOR):
    """Product of the selected pseudo-labels' predicted probabilities, floored."""
    history = list(history)
    if not history:
        return 1.0
    if any(not 0 < p <= 1 for p in history):
        raise ValueError("probabilities must lie in (0, 1]")
    return max(math.exp(sum(math.log(p) for p in history)), floor)


def random_regret_instance(rng, n_labels=2, n_models=2, n_states=5, n_priors=3):
    """Random positive utilities on a state grid with Dirichlet prior weights."""
    log_u = np.log(rng.uniform(0.01, 1.0, size=(n_labels, n_models, n_states)))
    W = rng.dirichlet(np.ones(n_states), size=n_priors)
    return log_u, W


def regret_counterexample():
    """A 2x2 instance on two states where a retained prior exceeds the 1/alpha bound."""
    log_u = np.log(
        np.array(
            [
                [[1.0, 0.01], [0.01, 0.01]],
                [[0.01, 1.0], [0.01, 0.01]],
            ]
        )
    )
    weights = np.array([[0.5, 0.5]])
    return log_u, weights, 0.9, (0, 0)


def all_pairs(J, K):
    return list(itertools.product(range(J), range(K)))
