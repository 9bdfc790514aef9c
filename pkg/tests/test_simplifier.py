from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import property_checks
import oracles
from conftest import random_model
from beliefplan.model import CPT, FactoredPomdp
from beliefplan.policies import FixedPolicy
from beliefplan.simplifier import (
    ClassPartition,
    kl_divergence,
    kl_gap,
    l1_distance,
    measure_kl_eps,
    measure_l1_eps,
    mixing_coefficient,
    project,
    simplified_belief,
    simplify,
)


@st.composite
def belief_and_partition(draw):
    n = draw(st.integers(1, 5))
    weights = draw(st.lists(st.floats(0, 1), min_size=1 << n, max_size=1 << n))
    w = np.array(weights)
    if w.sum() == 0:
        w[0] = 1.0
    order = draw(st.permutations(range(n)))
    cuts = sorted(draw(st.sets(st.integers(1, n - 1), max_size=n - 1))) if n > 1 else []
    classes, prev = [], 0
    for c in [*cuts, n]:
        classes.append(tuple(order[prev:c]))
        prev = c
    return w / w.sum(), ClassPartition(tuple(classes), n)


@settings(max_examples=200, deadline=None)
@given(belief_and_partition())
def test_projection_idempotent_and_marginal_preserving(case):
    phi, part = case
    s1 = simplify(phi, part)
    np.testing.assert_allclose(simplify(s1, part), s1, atol=1e-12, rtol=0)
    for a, b in zip(project(phi, part).marginals, project(s1, part).marginals):
        np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)
    np.testing.assert_allclose(s1, oracles.class_product(phi, part.classes, part.num_vars), atol=1e-12, rtol=0)


def test_product_is_fixed_point(rng):
    part = ClassPartition(((0, 2), (1,)), 3)
    for _ in range(20):
        prod = simplify(rng.dirichlet(np.ones(8)), part)
        np.testing.assert_allclose(project(prod, part).expand().probs, prod, atol=1e-12)


def test_perfectly_correlated_pair():
    part = ClassPartition.singletons(2)
    sb = project([0.5, 0.0, 0.0, 0.5], part)
    assert [m.tolist() for m in sb.marginals] == [[0.5, 0.5], [0.5, 0.5]]
    assert sb.probs.tolist() == [0.25] * 4


def test_single_class_is_identity(rng):
    for n in range(1, 5):
        phi = rng.dirichlet(np.ones(1 << n))
        assert np.array_equal(simplify(phi, ClassPartition.single(n)), phi)


def test_partition_validation():
    with pytest.raises(ValueError):
        ClassPartition(((0,), (0, 1)), 2)
    with pytest.raises(ValueError):
        ClassPartition(((0,),), 2)


# -- divergences ----------------------------------------------------------------


def test_kl_examples():
    p = np.array([0.2, 0.8])
    assert kl_divergence(p, p) == 0.0
    assert kl_divergence([1.0, 0.0], [0.5, 0.5], "bits") == 1.0
    assert kl_divergence([1.0, 0.0], [0.0, 1.0]) == math.inf


def test_kl_bits_against_high_precision():
    mpmath.mp.dps = 40
    ref = 0.5 * mpmath.log(2, 2) + 0.5 * mpmath.log(mpmath.mpf(0.5) / mpmath.mpf(0.75), 2)
    assert kl_divergence([0.5, 0.5], [0.25, 0.75], "bits") == pytest.approx(float(ref), abs=1e-15)
    assert round(float(ref), 5) == 0.20752


def test_l1_examples():
    assert l1_distance([1, 0], [0, 1]) == 2.0
    assert l1_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert l1_distance([0.5, 0.5], [0.25, 0.75]) == 0.5


def _one_var(p_one_given_zero, p_one_given_one):
    return FactoredPomdp(num_vars=1, actions=("a",), observations=("o",),
                         transition=((CPT((0,), (p_one_given_zero, p_one_given_one)),),),
                         observation_model=np.ones((2, 1)), rewards=np.zeros(2), r_max=1.0, discount=0.5)


def test_mixing_examples():
    assert mixing_coefficient(_one_var(0.3, 0.3)) == 1.0
    assert mixing_coefficient(_one_var(1.0, 0.0)) == 0.0
    assert mixing_coefficient(_one_var(0.3, 0.6)) == pytest.approx(0.7, abs=1e-15)


def test_mixing_matches_bruteforce(rng):
    for _ in range(20):
        m = random_model(rng, 2, 2, 2)
        want = min(sum(min(x, y) for x, y in zip(T[s], T[s2]))
                   for T in (oracles.joint_transition(m, a) for a in range(2))
                   for s in range(4) for s2 in range(4))
        assert mixing_coefficient(m) == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("name", sorted(property_checks.SUITE))
def test_property_suite_small(name):
    worst, bad = property_checks.SUITE[name](np.random.default_rng(len(name)), 500)
    assert worst <= 1e-12 and bad == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pinsker_in_nats_property(seed):
    _, bad = property_checks.pinsker(np.random.default_rng(seed), 5)
    assert bad == 0


# -- measured epsilon ------------------------------------------------------------


def _factored_model():
    """Two independent variables; the observation reads variable 0 only."""
    cpts = (CPT((0,), (0.2, 0.7)), CPT((1,), (0.6, 0.1)))
    obs = np.array([[0.9, 0.1], [0.2, 0.8], [0.9, 0.1], [0.2, 0.8]])
    return FactoredPomdp(num_vars=2, actions=("a",), observations=("x", "y"), transition=(cpts,),
                         observation_model=obs, rewards=np.zeros(4), r_max=1.0, discount=0.5,
                         classes=((0,), (1,)))


def test_single_class_epsilons_zero(rng):
    for _ in range(5):
        m = random_model(rng, 3, 2, 2)
        part = ClassPartition.single(3)
        assert measure_l1_eps(m, part, 3).max == 0.0
        assert measure_kl_eps(m, part, FixedPolicy(0), 5, 20, 1).max == 0.0


def test_class_independent_model_has_zero_epsilon():
    m = _factored_model()
    part = ClassPartition.of_model(m)
    assert measure_l1_eps(m, part, 4).max < 1e-15
    assert abs(measure_kl_eps(m, part, FixedPolicy(0), 6, 50, 0).max) < 1e-12


def test_l1_eps_matches_history_enumeration(rng):
    for _ in range(5):
        m = random_model(rng, 2, 2, 2, classes=((0,), (1,)))
        part = ClassPartition.of_model(m)
        est = measure_l1_eps(m, part, 3)
        assert est.exhaustive
        assert est.max == pytest.approx(oracles.l1_eps(m, part.classes, 3), abs=1e-12)


def test_l1_eps_sampling_fallback(rng):
    m = random_model(rng, 2, 2, 2, classes=((0,), (1,)))
    part = ClassPartition.of_model(m)
    est = measure_l1_eps(m, part, 6, cap=10, episodes=30, seed=4)
    assert not est.exhaustive
    assert est.samples == 1 + 30 * 6
    assert est.max <= oracles.l1_eps(m, part.classes, 6) + 1e-12
    assert est == measure_l1_eps(m, part, 6, cap=10, episodes=30, seed=4)


def test_kl_eps_matches_depth2_enumeration(rng):
    for _ in range(5):
        m = random_model(rng, 2, 2, 2, classes=((0,), (1,)))
        part = ClassPartition.of_model(m)
        for a in range(2):
            want = max(max(g) for _, _, _, g in oracles.true_histories(m, part.classes, [a, a], 2))
            got = measure_kl_eps(m, part, FixedPolicy(a), 2, 400, 9).max
            assert got == pytest.approx(want, abs=1e-12)


def test_kl_gap_zero_when_already_simplified(rng):
    part = ClassPartition.singletons(2)
    phi = simplify(rng.dirichlet(np.ones(4)), part)
    assert abs(kl_gap(phi, phi, part)) < 1e-14


def test_simplified_belief_recursion(rng):
    m = random_model(rng, 3, 2, 2)
    part = ClassPartition.of_model(m)
    hist = ((0, 0), (1, 1), (0, 1))
    phi = oracles.class_product(oracles.dirac(m), part.classes, 3)
    for a, o in hist:
        post, _ = oracles.bayes(m, phi, a, o)
        phi = oracles.class_product(post, part.classes, 3)
    np.testing.assert_allclose(simplified_belief(m, part, hist), phi, atol=1e-12)
