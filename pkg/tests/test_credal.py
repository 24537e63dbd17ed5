import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpls import glm
from rpls.credal import (
    adaptive_alpha,
    all_pairs,
    alpha_cut,
    check_regret_guarantee,
    compute_regret,
    gamma_maximin,
    gamma_maximin_posterior,
    log_evidence_table,
    prior_grid,
    random_regret_instance,
    regret_alpha_cut,
    regret_counterexample,
)
from rpls.dataset import generate_binomial
from rpls.evidence import PriorSpec


def priors(n):
    return [PriorSpec(p, [0.0], 1.0) for p in range(n)]


def test_gamma_maximin_prefers_safe_candidate():
    table = np.array([[0.9, 0.5], [0.2, 0.5]])  # rows: priors; columns: A, B
    res = gamma_maximin(table)
    assert res.top == 1
    assert res.audit[0]["worst_prior"] == 1


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_gamma_maximin_score_is_lower_envelope(seed):
    rng = np.random.default_rng(seed)
    table = rng.uniform(size=(rng.integers(1, 6), rng.integers(1, 8)))
    for i, score in gamma_maximin(table).ranked:
        assert score == table[:, i].min()
        assert np.all(table[:, i] >= score)


def test_gamma_maximin_rejects_empty():
    with pytest.raises(ValueError):
        gamma_maximin(np.empty((0, 3)))
    with pytest.raises(ValueError):
        gamma_maximin_posterior(np.zeros((2, 1)), np.array([0, 1]), np.zeros((1, 1)), [1], glm.full_model(1), [])


def test_gamma_maximin_posterior_runs():
    data = generate_binomial(40, [1.5], 0.0, seed=1)
    ps = prior_grid([[0.0, 0.0], [0.0, 2.0]], scales=(1.0, 3.0))
    assert len(ps) == 4 and [p.prior_id for p in ps] == [0, 1, 2, 3]
    res = gamma_maximin_posterior(data.features, data.labels, np.array([[-2.0], [0.0], [2.0]]), [0, 1, 1],
                                  glm.full_model(1), ps)
    assert res.top in (0, 2)
    assert len(res.audit[1]["per_prior"]) == 4


def test_alpha_cut_examples():
    ps = priors(3)
    ev = [math.log(1.0), math.log(0.5), math.log(0.2)]
    assert [p.prior_id for p in alpha_cut(ps, ev, 0.4)] == [0, 1]
    assert [p.prior_id for p in alpha_cut(ps, ev, 1.0)] == [0]
    assert [p.prior_id for p in alpha_cut(ps, ev, 0.1)] == [0, 1, 2]
    assert [p.prior_id for p in alpha_cut(ps, {0: 0.0, 1: 0.0, 2: -9.0}, 1.0)] == [0, 1]
    with pytest.raises(ValueError):
        alpha_cut(ps, ev, 0.0)
    with pytest.raises(ValueError):
        alpha_cut(ps, [0.0, math.inf, 0.0], 0.5)


@given(st.lists(st.floats(-30, 0), min_size=1, max_size=10), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
@settings(max_examples=100, deadline=None)
def test_alpha_cut_nested_and_non_empty(ev, a1, a2):
    ps = priors(len(ev))
    lo, hi = sorted((a1, a2))
    small = {p.prior_id for p in alpha_cut(ps, ev, hi)}
    large = {p.prior_id for p in alpha_cut(ps, ev, lo)}
    assert small and small <= large
    assert int(np.argmax(ev)) in small


def test_regret_alpha_cut_hand_example():
    # one label, two models; the best pair is model 1 under prior 0 with evidence 1.0
    table = np.log(np.array([[[0.8, 1.0]], [[0.7, 0.9]]]))
    ps = priors(2)
    kept, audit = regret_alpha_cut(ps, table, 0.6, used=(0, 0))
    assert [p.prior_id for p in kept] == [0, 1] and not audit["fallback"]
    kept, audit = regret_alpha_cut(ps, table, 0.9, used=(0, 0))
    assert audit["fallback"]
    assert [p.prior_id for p in kept] == [0]


@given(st.lists(st.floats(-20, 0), min_size=1, max_size=8), st.floats(0.01, 1.0))
@settings(max_examples=100, deadline=None)
def test_regret_cut_reduces_to_alpha_cut_for_one_pair(ev, alpha):
    ps = priors(len(ev))
    kept, audit = regret_alpha_cut(ps, np.array(ev)[:, None, None], alpha)
    assert not audit["fallback"]
    assert kept == alpha_cut(ps, ev, alpha)


def test_compute_regret_hand_values():
    u = np.array([[[1.0, 0.5], [0.5, 0.5]], [[0.25, 1.0], [0.5, 0.25]]])
    rep = compute_regret(np.log(u), [[0.5, 0.5], [1.0, 0.0]])
    assert np.allclose(rep.label_regret, [1.0, 2.0])
    assert np.allclose(rep.model_regret, [1.0, 1.0])
    assert np.allclose(rep.total_regret, [1.0, 2.0])
    assert rep.expected_total == pytest.approx({0: 1.5, 1: 1.0})


def test_regret_at_best_pair_is_one():
    log_u = np.log(np.full((2, 2, 3), 0.3))
    log_u[1, 1] = 0.0
    rep = compute_regret(log_u, [[1 / 3] * 3], used=(1, 1))
    assert np.allclose(rep.total_regret, 1.0)


def test_log_evidence_table_matches_direct_sum():
    rng = np.random.default_rng(3)
    log_u, W = random_regret_instance(rng, 2, 3, 4, 2)
    table = log_evidence_table(log_u, W)
    for p, j, k in [(0, 0, 0), (1, 1, 2), (0, 1, 1)]:
        assert table[p, j, k] == pytest.approx(math.log(np.sum(W[p] * np.exp(log_u[j, k]))))
    assert len(all_pairs(2, 3)) == 6


def test_regret_counterexample_breaks_reciprocal_bound():
    log_u, W, alpha, used = regret_counterexample()
    out = check_regret_guarantee(log_u, W, alpha, used)
    assert out["retained"] == [0] and not out["fallback"]
    assert out["max_expected_regret"] == pytest.approx(50.5)
    assert not out["holds"]
    assert out["ratio_holds"]


@given(st.integers(0, 10_000), st.sampled_from([0.3, 0.5, 0.8, 1.0]))
@settings(max_examples=60, deadline=None)
def test_expectation_ratio_bounded_when_cut_not_empty(seed, alpha):
    rng = np.random.default_rng(seed)
    log_u, W = random_regret_instance(rng, 2, 2, 6, 3)
    out = check_regret_guarantee(log_u, W, alpha)
    if not out["fallback"]:
        assert out["ratio_holds"]


def test_adaptive_alpha():
    assert adaptive_alpha([0.9, 0.9]) == pytest.approx(0.81)
    assert adaptive_alpha([]) == 1.0
    assert adaptive_alpha([0.1, 0.1, 0.1]) == 0.01
    assert adaptive_alpha([0.5] * 3, floor=0.2) == 0.2
    with pytest.raises(ValueError):
        adaptive_alpha([1.2])
