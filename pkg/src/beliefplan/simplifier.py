"""Class-partition belief simplification, divergences, mixing, and measured approximation error."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from . import kernels
from .model import (
    BeliefState,
    FactoredPomdp,
    ZeroObservationProbability,
    _update,
    as_probs,
    dirac_belief,
    new_sim,
    sim_step,
    state_bits,
)
from .rng import generator

LN2 = math.log(2.0)
EXHAUSTIVE_CAP = 100_000


@dataclass(frozen=True)
class ClassPartition:
    """Disjoint, covering classes of variable indices."""

    classes: tuple[tuple[int, ...], ...]
    num_vars: int

    def __post_init__(self):
        classes = tuple(tuple(int(v) for v in c) for c in self.classes)
        object.__setattr__(self, "classes", classes)
        seen: set[int] = set()
        for k, cls in enumerate(classes):
            if not cls:
                raise ValueError(f"class {k} is empty")
            for v in cls:
                if not 0 <= v < self.num_vars:
                    raise ValueError(f"class {k}: variable {v} out of range")
                if v in seen:
                    raise ValueError(f"variable {v} appears in more than one class")
                seen.add(v)
        if len(seen) != self.num_vars:
            missing = sorted(set(range(self.num_vars)) - seen)
            raise ValueError(f"variables {missing} are not covered by any class")

    @classmethod
    def single(cls, num_vars: int) -> "ClassPartition":
        return cls((tuple(range(num_vars)),), num_vars)

    @classmethod
    def singletons(cls, num_vars: int) -> "ClassPartition":
        return cls(tuple((v,) for v in range(num_vars)), num_vars)

    @classmethod
    def of_model(cls, model: FactoredPomdp) -> "ClassPartition":
        return cls(model.partition_classes(), model.num_vars)

    @property
    def is_trivial(self) -> bool:
        return len(self.classes) == 1

    @cached_property
    def class_index(self) -> np.ndarray:
        """``(K, 2**n)``: index of each joint state's assignment within each class."""
        bits = state_bits(self.num_vars)
        out = np.zeros((len(self.classes), bits.shape[0]), dtype=np.intp)
        for k, cls in enumerate(self.classes):
            for j, v in enumerate(cls):
                out[k] |= bits[:, v] << j
        out.setflags(write=False)
        return out

    @cached_property
    def class_sizes(self) -> np.ndarray:
        sizes = np.array([1 << len(c) for c in self.classes], dtype=np.intp)
        sizes.setflags(write=False)
        return sizes

    def to_list(self) -> list[list[int]]:
        return [list(c) for c in self.classes]


@dataclass(frozen=True)
class SimplifiedBelief:
    """Per-class marginals; the belief they stand for is their product."""

    partition: ClassPartition
    marginals: tuple[np.ndarray, ...]

    def expand(self) -> BeliefState:
        idx = self.partition.class_index
        out = self.marginals[0][idx[0]]
        for k in range(1, len(self.marginals)):
            out = out * self.marginals[k][idx[k]]
        return BeliefState(out)

    @cached_property
    def probs(self) -> np.ndarray:
        return self.expand().probs


def project(belief, partition: ClassPartition) -> SimplifiedBelief:
    phi = as_probs(belief)
    margs = kernels.marginals(phi, partition.class_index, partition.class_sizes)
    return SimplifiedBelief(partition, tuple(np.asarray(m) for m in margs))


def simplify(belief, partition: ClassPartition) -> np.ndarray:
    """``S(phi)`` as a dense joint vector."""
    return kernels.project(as_probs(belief), partition.class_index, partition.class_sizes)


def simplified_belief(model: FactoredPomdp, partition: ClassPartition, history) -> np.ndarray:
    """Approximate belief after a history: exact update then projection at every step."""
    phi = simplify(dirac_belief(model), partition)
    for a, o in history:
        post, _ = _update(model, phi, a, o)
        phi = simplify(post, partition)
    return phi


def kl_divergence(p, q, base: str = "nats") -> float:
    """``D(p||q)``; +inf when p puts mass where q has none."""
    p, q = as_probs(p), as_probs(q)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    d = max(math.fsum(p[mask] * np.log(p[mask] / q[mask])), 0.0)
    if base == "nats":
        return d
    if base == "bits":
        return d / LN2
    raise ValueError(f"unknown base {base!r}")


def l1_distance(p, q) -> float:
    p, q = as_probs(p), as_probs(q)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return math.fsum(np.abs(p - q))


def mixing_coefficient(model: FactoredPomdp) -> float:
    """Smallest transition-row overlap ``sum min(P(.|a,s1), P(.|a,s2))`` over actions and state pairs."""
    eta = 1.0
    for T in model.transition_matrices:
        for s in range(T.shape[0] - 1):
            overlaps = np.minimum(T[s], T[s + 1:]).sum(axis=1)
            eta = min(eta, float(overlaps.min()))
    return min(max(eta, 0.0), 1.0)


def max_row_l1(model: FactoredPomdp) -> float:
    worst = 0.0
    for T in model.transition_matrices:
        for s in range(T.shape[0] - 1):
            worst = max(worst, float(np.abs(T[s] - T[s + 1:]).sum(axis=1).max()))
    return worst


@dataclass(frozen=True)
class EpsilonEstimate:
    kind: str  # "L1" or "KL"
    max: float
    mean: float
    samples: int
    depth: int
    seed: int
    exhaustive: bool = False

    @property
    def value(self) -> float:
        return self.max

    CSV_HEADER = ("kind", "max", "mean", "samples", "depth", "seed")

    def csv_row(self) -> tuple:
        return (self.kind, repr(float(self.max)), repr(float(self.mean)), self.samples, self.depth, self.seed)


def _children(model: FactoredPomdp, phi: np.ndarray):
    """Yield ``(a, o, prob, pre_simplified)`` for every positive-probability pair."""
    obs = model.observation_model
    for a in range(model.num_actions):
        pred = kernels.predict(phi, model.transition_matrices[a])
        probs = kernels.obs_probs(pred, obs)
        for o in range(model.num_observations):
            if probs[o] > kernels.MIN_EVIDENCE:
                post, _ = kernels.condition(pred, np.ascontiguousarray(obs[:, o]))
                yield a, o, probs[o], post


def measure_l1_eps(
    model: FactoredPomdp,
    partition: ClassPartition,
    depth: int = 3,
    *,
    cap: int = EXHAUSTIVE_CAP,
    episodes: int = 1000,
    seed: int = 0,
) -> EpsilonEstimate:
    """Worst L1 simplification gap over pre-simplified beliefs reachable within ``depth`` steps.

    The reachable set is enumerated breadth-first (deduplicating identical
    simplified beliefs) while it stays under ``cap`` evaluations; past that,
    ``episodes`` seeded trajectories of the simplified process are sampled.
    """
    d0 = dirac_belief(model).probs
    root = simplify(d0, partition)
    gaps = [l1_distance(d0, root)]
    frontier = [root]
    seen = {_key(root)}
    exhaustive = True
    for _ in range(depth):
        nxt = []
        for phi in frontier:
            for _a, _o, _p, pre in _children(model, phi):
                child = simplify(pre, partition)
                gaps.append(l1_distance(pre, child))
                key = _key(child)
                if key not in seen:
                    seen.add(key)
                    nxt.append(child)
            if len(gaps) > cap:
                exhaustive = False
                break
        if not exhaustive:
            break
        frontier = nxt
    if not exhaustive:
        gaps = [gaps[0]]
        for e in range(episodes):
            rng = generator(seed, "l1-eps", e)
            phi = root
            for _ in range(depth):
                a = int(rng.integers(model.num_actions))
                pred = kernels.predict(phi, model.transition_matrices[a])
                probs = kernels.obs_probs(pred, model.observation_model)
                o = _draw(probs, rng.random())
                pre, _ = kernels.condition(pred, np.ascontiguousarray(model.observation_model[:, o]))
                phi = simplify(pre, partition)
                gaps.append(l1_distance(pre, phi))
    return EpsilonEstimate("L1", max(gaps), math.fsum(gaps) / len(gaps), len(gaps), depth, seed, exhaustive)


def _key(phi: np.ndarray) -> bytes:
    return np.round(phi, 12).tobytes()


def _draw(probs: np.ndarray, u: float) -> int:
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, u * cum[-1], side="right"))
    last = probs.shape[0] - 1 - int(np.argmax(probs[::-1] > 0))
    return min(idx, last)


@dataclass
class TrackStep:
    """One transition of a trajectory with exact and simplified beliefs side by side."""

    t: int
    action: int
    observation: int
    reward: float
    belief: np.ndarray  # beta(rho) before acting
    simplified: np.ndarray  # beta_hat(rho) before acting
    next_belief: np.ndarray  # beta(rho; <a,o>)
    pre_simplified: np.ndarray  # U(beta_hat(rho), <a,o>)
    next_simplified: np.ndarray  # beta_hat(rho; <a,o>)


def track(
    model: FactoredPomdp,
    partition: ClassPartition,
    policy,
    steps: int,
    rng: np.random.Generator,
) -> Iterator[TrackStep]:
    """Run ``policy`` in the true POMDP, maintaining the exact and simplified beliefs."""
    beta = dirac_belief(model).probs
    beta_hat = simplify(beta, partition)
    sim = new_sim(model, rng)
    history: tuple = ()
    for t in range(steps):
        a = int(policy(history, beta_hat))
        o, r, sim = sim_step(model, sim, a)
        nb, _ = _update(model, beta, a, o)
        pre, _ = _update(model, beta_hat, a, o)
        nbh = simplify(pre, partition)
        yield TrackStep(t, a, o, r, beta, beta_hat, nb, pre, nbh)
        beta, beta_hat = nb, nbh
        history = history + ((a, o),)


def kl_gap(psi, phi, partition: ClassPartition) -> float:
    """``D(psi||S(phi)) - D(psi||phi)`` in nats; an undefined inf-inf counts as +inf."""
    first = kl_divergence(psi, simplify(phi, partition))
    second = kl_divergence(psi, phi)
    if math.isinf(first) and math.isinf(second):
        return math.inf
    return first - second


def measure_kl_eps(
    model: FactoredPomdp,
    partition: ClassPartition,
    policy,
    horizon: int,
    episodes: int,
    seed: int,
) -> EpsilonEstimate:
    """Worst KL simplification gap along trajectories of ``policy`` in the true POMDP.

    Trajectories are the same ones :func:`beliefplan.evaluator.drift_trace`
    sees for equal (policy, horizon, episodes, seed).
    """
    gaps = []
    for e in range(episodes):
        for step in track(model, partition, policy, horizon, generator(seed, "episode", e)):
            gaps.append(kl_gap(step.next_belief, step.pre_simplified, partition))
    if not gaps:
        return EpsilonEstimate("KL", 0.0, 0.0, 0, horizon, seed)
    finite = [g for g in gaps if math.isfinite(g)]
    mean = math.inf if len(finite) < len(gaps) else math.fsum(gaps) / len(gaps)
    return EpsilonEstimate("KL", max(gaps), mean, len(gaps), horizon, seed)


__all__ = [
    "ClassPartition",
    "EpsilonEstimate",
    "SimplifiedBelief",
    "ZeroObservationProbability",
    "kl_divergence",
    "kl_gap",
    "l1_distance",
    "max_row_l1",
    "measure_kl_eps",
    "measure_l1_eps",
    "mixing_coefficient",
    "project",
    "simplified_belief",
    "simplify",
    "track",
]


