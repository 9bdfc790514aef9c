"""Randomized checks of the L1/KL inequalities behind the drift bounds.

Each check draws ``count`` random instances and returns
``(worst_equality_error, violations)``.  Inequalities allow ``SLACK`` of
floating-point round-off, since several hold with equality on some draws.
"""
from __future__ import annotations

import numpy as np

from beliefplan.simplifier import kl_divergence, l1_distance

SLACK = 1e-12


def _dist(rng, size, sparse=False):
    p = rng.dirichlet(np.full(size, rng.choice([0.2, 1.0, 5.0])))
    if sparse and rng.random() < 0.3:
        p[rng.random(size) < 0.3] = 0.0
        if p.sum() == 0:
            p[0] = 1.0
        p /= p.sum()
    return p


def pinsker(rng, count):
    bad = 0
    for _ in range(count):
        k = int(rng.integers(2, 9))
        p = _dist(rng, k, sparse=True)
        q = _dist(rng, k)
        if kl_divergence(p, q) < 0.5 * l1_distance(p, q) ** 2 - SLACK:
            bad += 1
    return 0.0, bad


def joint_preserves_l1(rng, count):
    """``||P(x|s)b(s) - P(x|s)b'(s)||_1 == ||b - b'||_1``."""
    worst = 0.0
    for _ in range(count):
        S, X = int(rng.integers(2, 9)), int(rng.integers(1, 6))
        b, b2 = _dist(rng, S, True), _dist(rng, S, True)
        kernel = rng.dirichlet(np.ones(X), size=S)
        lhs = l1_distance((kernel * b[:, None]).ravel(), (kernel * b2[:, None]).ravel())
        worst = max(worst, abs(lhs - l1_distance(b, b2)))
    return worst, 0


def marginal_contracts(rng, count):
    """``||P(x) - Q(x)||_1 <= ||P(x,y) - Q(x,y)||_1``."""
    bad = 0
    for _ in range(count):
        X, Y = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        P = _dist(rng, X * Y, True).reshape(X, Y)
        Q = _dist(rng, X * Y, True).reshape(X, Y)
        if l1_distance(P.sum(axis=1), Q.sum(axis=1)) > l1_distance(P.ravel(), Q.ravel()) + SLACK:
            bad += 1
    return 0.0, bad


def conditional_bound(rng, count):
    """``E_{o~P} ||P(x|o) - Q(x|o)||_1 <= ||P(x,o) - Q(x,o)||_1 + ||P(o) - Q(o)||_1``."""
    bad = 0
    for _ in range(count):
        X, O = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        P = _dist(rng, X * O).reshape(X, O)
        Q = _dist(rng, X * O).reshape(X, O)
        Po, Qo = P.sum(axis=0), Q.sum(axis=0)
        lhs = sum(Po[o] * l1_distance(P[:, o] / Po[o], Q[:, o] / Qo[o]) for o in range(O))
        if lhs > l1_distance(P.ravel(), Q.ravel()) + l1_distance(Po, Qo) + SLACK:
            bad += 1
    return 0.0, bad


SUITE = {
    "pinsker_nats": pinsker,
    "joint_l1_equality": joint_preserves_l1,
    "marginal_contraction": marginal_contracts,
    "conditional_bound": conditional_bound,
}
