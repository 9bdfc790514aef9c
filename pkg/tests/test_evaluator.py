from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np
import pytest

import oracles
from conftest import constant_model, random_model
from beliefplan.evaluator import (
    check_drift_bounds,
    check_drifting_bound,
    check_tracking_bound,
    drift_trace,
    drifting_bound,
    estimate_value,
    rollout_return,
    truncation_tail,
    v_max,
    value_gap_trace,
)
from beliefplan.generator import GeneratorSpec, generate_model
from beliefplan.model import CPT, FactoredPomdp
from beliefplan.planner import PlannerConfig, PlannerPolicy
from beliefplan.policies import FixedPolicy, RandomPolicy
from beliefplan.rng import generator
from beliefplan.simplifier import ClassPartition, measure_kl_eps, measure_l1_eps, mixing_coefficient


def test_zero_reward_returns_zero(rng):
    m = _with_rewards(random_model(rng, 2, 2, 2), np.zeros(4))
    assert rollout_return(m, FixedPolicy(0), 10, generator(1)) == 0.0


def _with_rewards(m, rewards):
    return replace(m, rewards=rewards)


def test_geometric_return():
    m = constant_model(discount=0.9)
    assert rollout_return(m, FixedPolicy(0), 4, generator(0)) == pytest.approx(3.439, abs=1e-12)


def test_rollout_deterministic_under_seed(rng):
    m = random_model(rng, 2, 2, 3)
    pol = RandomPolicy(2, 5)
    assert rollout_return(m, pol, 15, generator(3)) == rollout_return(m, pol, 15, generator(3))


def test_truncation_property(rng):
    m = random_model(rng, 2, 2, 2, discount=0.8)
    for seed in range(20):
        short = rollout_return(m, FixedPolicy(1), 6, generator(seed))
        long = rollout_return(m, FixedPolicy(1), 9, generator(seed))
        assert abs(long - short) <= truncation_tail(m, 6) + 1e-12


def test_estimate_value_deterministic_model():
    m = constant_model(discount=0.9)
    mean, half = estimate_value(m, FixedPolicy(0), 5, 6, 0)
    assert half == 0.0
    assert mean == pytest.approx((1 - 0.9**6) / (1 - 0.9), abs=1e-12)


def test_estimate_value_matches_markov_chain():
    # one variable, fixed action: a two-state chain with closed-form value
    m = FactoredPomdp(num_vars=1, actions=("a",), observations=("x", "y"),
                      transition=((CPT((0,), (0.3, 0.8)),),), observation_model=np.array([[0.6, 0.4], [0.1, 0.9]]),
                      rewards=np.array([0.0, 1.0]), r_max=1.0, discount=0.7)
    want = oracles.chain_value(m, 0, 12)
    mean, half = estimate_value(m, FixedPolicy(0), 4000, 12, 8)
    assert abs(mean - want) <= half
    assert v_max(m) == pytest.approx(1 / 0.3)


def test_estimate_value_needs_two_episodes():
    with pytest.raises(ValueError):
        estimate_value(constant_model(), FixedPolicy(0), 1, 3, 0)


# -- drift -------------------------------------------------------------------------


def test_single_class_drift_is_zero(rng):
    m = random_model(rng, 3, 2, 2)
    tr = drift_trace(m, ClassPartition.single(3), RandomPolicy(2, 1), 30, 6, 2)
    assert tr.l1_max == [0.0] * 7 and tr.kl_max == [0.0] * 7


def test_drift_starts_at_zero(rng):
    m = random_model(rng, 3, 2, 2)
    tr = drift_trace(m, ClassPartition.singletons(3), RandomPolicy(2, 1), 20, 3, 2)
    assert tr.l1_mean[0] == 0.0 and tr.kl_mean[0] == 0.0


def test_drift_matches_exact_expectation():
    m = random_model(np.random.default_rng(31), 2, 2, 2, classes=((0,), (1,)))
    part = ClassPartition.of_model(m)
    for a in range(2):
        tr = drift_trace(m, part, FixedPolicy(a), 3000, 3, 17)
        exact = oracles.expected_l1_drift(m, part.classes, a, 3)
        for t in range(4):
            assert abs(tr.l1_mean[t] - exact[t]) <= 4 * tr.l1_se[t] + 1e-12


def test_drift_bounds_hold_on_generated_model():
    m = generate_model(GeneratorSpec(num_vars=3, eta_min=0.5, num_observations=3, seed=4))
    part = ClassPartition.of_model(m)
    pol = RandomPolicy(2, 4)
    eps_kl = measure_kl_eps(m, part, pol, 8, 500, 1).max
    eps_l1 = measure_l1_eps(m, part, 4).max
    trace = drift_trace(m, part, pol, 500, 8, 1)
    reports = check_drift_bounds(trace, eps_kl, eps_l1, mixing_coefficient(m))
    assert [r.tag for r in reports] == ["drift_KL", "pinsker", "drift_L1"]
    assert all(r.passed and not r.vacuous for r in reports)


def _unmixing_model():
    """Deterministic permutation (x0 ^= x1) with noisy observations: eta = 0, classes correlate."""
    cpts = (CPT((0, 1), (0.0, 1.0, 1.0, 0.0)), CPT((1,), (0.0, 1.0)))
    obs = np.array([[0.8, 0.2], [0.3, 0.7], [0.6, 0.4], [0.1, 0.9]])
    return FactoredPomdp(num_vars=2, actions=("step",), observations=("x", "y"), transition=(cpts,),
                         observation_model=obs, rewards=np.array([0.0, 0.3, 0.6, 1.0]), r_max=1.0, discount=0.5,
                         initial_state=2, classes=((0,), (1,)))


def test_unmixing_model_l1_holds_kl_vacuous(caplog):
    m = _unmixing_model()
    part = ClassPartition.of_model(m)
    assert mixing_coefficient(m) == 0.0
    pol = FixedPolicy(0)
    trace = drift_trace(m, part, pol, 300, 8, 3)
    with caplog.at_level(logging.WARNING):
        reports = check_drift_bounds(trace, measure_kl_eps(m, part, pol, 8, 300, 3).max,
                                     measure_l1_eps(m, part, 8).max, 0.0)
    kl, pinsker, l1 = reports
    assert kl.vacuous and pinsker.vacuous and kl.passed
    assert l1.passed and not l1.vacuous
    assert "vacuous" in caplog.text


# -- value gaps --------------------------------------------------------------------


def test_drifting_bound_is_linear():
    eps, r, g = 0.013, 2.0, 0.6
    diff = drifting_bound(0.1, eps, r, g, 5) - drifting_bound(0.1, eps, r, g, 0)
    assert diff == pytest.approx(5 * 12 * eps * r / (1 - g) ** 2, rel=1e-12)


def _planner(m, part, delta=1.0):
    return PlannerPolicy(m, PlannerConfig(delta, m.discount, m.r_max, part, seed=1))


def test_single_class_gap_within_delta():
    m = generate_model(GeneratorSpec(num_vars=2, discount=0.3, seed=8))
    part = ClassPartition.single(2)
    trace = value_gap_trace(m, part, _planner(m, part), 40, 3, 4, 5)
    rep = check_tracking_bound(m, part, trace, 1.0, 0.0, mixing_coefficient(m))
    assert rep.all_passed
    assert max(max(v) for v in trace.opt_gap) < 1e-12
    drift = check_drifting_bound(m, part, trace, 1.0, 0.0)
    assert drift.all_passed
    assert all(row.bound == 1.0 for row in drift.rows)


def test_iid_transition_model_tracking():
    m = generate_model(GeneratorSpec(num_vars=2, eta_min=1.0, discount=0.3, seed=9))
    assert mixing_coefficient(m) == pytest.approx(1.0, abs=1e-12)
    part = ClassPartition.of_model(m)
    pol = _planner(m, part)
    trace = value_gap_trace(m, part, pol, 60, 4, 4, 2)
    eps_kl = measure_kl_eps(m, part, pol, 4, 60, 2).max
    assert check_tracking_bound(m, part, trace, 1.0, eps_kl, mixing_coefficient(m)).all_passed


def test_value_gap_triangle_and_bounds():
    m = generate_model(GeneratorSpec(num_vars=3, eta_min=0.4, discount=0.3, seed=10))
    part = ClassPartition.of_model(m)
    pol = _planner(m, part)
    trace = value_gap_trace(m, part, pol, 40, 4, 4, 6)
    for t in range(5):
        for g, g1, g2 in zip(trace.gap[t], trace.gap_to_simplified_opt[t], trace.opt_gap[t]):
            assert g <= g1 + g2 + 1e-12
    eps_kl = measure_kl_eps(m, part, pol, 4, 40, 6).max
    eps_l1 = measure_l1_eps(m, part, 5).max
    assert check_tracking_bound(m, part, trace, 1.0, eps_kl, mixing_coefficient(m)).all_passed
    drifting = check_drifting_bound(m, part, trace, 1.0, eps_l1)
    assert drifting.all_passed
    assert [s.tag for s in drifting.supporting] == ["drift_L1", "reward_gap", "obsdist_gap"]


def test_vacuous_tracking_passes_with_warning(caplog):
    m = _unmixing_model()
    part = ClassPartition.of_model(m)
    trace = value_gap_trace(m, part, FixedPolicy(0), 10, 2, 2, 0)
    with caplog.at_level(logging.WARNING):
        rep = check_tracking_bound(m, part, trace, 0.5, 0.1, 0.0)
    assert rep.vacuous and rep.all_passed and math.isinf(rep.rows[0].bound)
    assert "vacuous" in caplog.text
