"""Numpy reference kernels.

Every reduction here runs in a fixed sequential order so that the compiled
kernels in ``_ckernels.pyx`` reproduce the results bit for bit.  Avoid
``ndarray.sum`` (pairwise) and BLAS products in this module.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"

# posterior undefined at or below this evidence
MIN_EVIDENCE = 1e-300


def predict(phi, trans):
    """One-step predicted distribution ``phi @ trans`` with rows added in order."""
    out = np.zeros(trans.shape[1])
    for s in range(phi.shape[0]):
        p = phi[s]
        if p != 0.0:
            out += p * trans[s]
    return out


def obs_probs(pred, obs):
    out = np.zeros(obs.shape[1])
    for s in range(pred.shape[0]):
        p = pred[s]
        if p != 0.0:
            out += p * obs[s]
    return out


def condition(pred, obs_col):
    """Return ``(posterior, evidence)``; posterior is all zeros when evidence vanishes."""
    joint = pred * obs_col
    z = float(np.add.accumulate(joint)[-1])
    if z <= MIN_EVIDENCE:
        return np.zeros_like(joint), z
    return joint / z, z


def expected(phi, values):
    return float(np.add.accumulate(phi * values)[-1])


def marginals(phi, class_index, class_sizes):
    return [
        np.bincount(class_index[k], weights=phi, minlength=int(class_sizes[k]))
        for k in range(class_index.shape[0])
    ]


def project(phi, class_index, class_sizes):
    margs = marginals(phi, class_index, class_sizes)
    out = margs[0][class_index[0]]
    for k in range(1, len(margs)):
        out = out * margs[k][class_index[k]]
    return out


def expand(phi, trans, obs, class_index, class_sizes):
    """Observation probabilities and projected posteriors for every (action, observation).

    Returns ``(probs, children)`` with shapes ``(A, O)`` and ``(A, O, S)``.
    Children whose observation has probability <= MIN_EVIDENCE are left zero.
    """
    n_actions = trans.shape[0]
    n_states, n_obs = obs.shape
    probs = np.zeros((n_actions, n_obs))
    children = np.zeros((n_actions, n_obs, n_states))
    for a in range(n_actions):
        pred = predict(phi, trans[a])
        probs[a] = obs_probs(pred, obs)
        for o in range(n_obs):
            z = probs[a, o]
            if z <= MIN_EVIDENCE:
                continue
            post = pred * obs[:, o] / z
            children[a, o] = project(post, class_index, class_sizes)
    return probs, children


def _seq_sum(x) -> float:
    return float(np.add.accumulate(x)[-1])


def _draw_counts(probs, samples, seed, stream):
    """Multinomial observation counts for every action at one node."""
    g = stream.reset(seed)
    counts = np.empty(probs.shape, dtype=np.int64)
    for a in range(probs.shape[0]):
        p = np.where(probs[a] > MIN_EVIDENCE, probs[a], 0.0)
        counts[a] = g.multinomial(samples, p / _seq_sum(p))
    return counts


def sparse_search(phi, depth, seed, trans, obs, rewards, class_index, class_sizes, gamma, samples, stream,
                  only_action=-1):
    """Sampled Q values at one node; returns ``(q, nodes)``.

    With ``only_action >= 0`` the root recurses into that action only (the
    other entries are NaN); the root still draws every action's counts so the
    result equals the full search's entry.
    """
    from .rng import child_seed

    n_actions = trans.shape[0]
    nodes = 1
    r = expected(phi, rewards)
    q = np.full(n_actions, r)
    if depth == 0:
        return q, nodes
    probs, children = expand(phi, trans, obs, class_index, class_sizes)
    counts = _draw_counts(probs, samples, seed, stream)
    for a in range(n_actions):
        if only_action >= 0 and a != only_action:
            q[a] = np.nan
            continue
        acc = 0.0
        for o in range(counts.shape[1]):
            c = counts[a, o]
            if c == 0:
                continue
            cq, n = sparse_search(children[a, o], depth - 1, child_seed(seed, a, o), trans, obs, rewards,
                                  class_index, class_sizes, gamma, samples, stream)
            nodes += n
            acc += float(c) * float(cq.max())
        q[a] = r + gamma * acc / samples
    return q, nodes
