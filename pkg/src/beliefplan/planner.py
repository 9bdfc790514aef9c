"""Sparse-sampling lookahead over simplified beliefs, and the exhaustive expectimax oracle.

At every agent node the sampler draws ``C`` observations per action from the
node's observation distribution.  Draws of the same observation lead to the
same child belief, so the multiset is kept as multinomial counts and each
distinct observation's subtree is searched once and weighted by
``count / C``.  This leaves every node's Monte Carlo average unbiased and
bounds the tree by ``sum_i (|A| min(C, |O|))**i`` nodes.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import FactoredPomdp, as_probs
from .rng import MASK64, NodeStream, derive_seed, history_key
from .simplifier import ClassPartition, SimplifiedBelief, simplify

DEFAULT_NODE_BUDGET = 10_000_000


class BudgetExceeded(RuntimeError):
    def __init__(self, estimate: int, budget: int):
        self.estimate = estimate
        self.budget = budget
        super().__init__(f"search needs ~{estimate} nodes ((|A||O|)^d growth), budget is {budget}")


@dataclass(frozen=True)
class PlannerConfig:
    delta: float
    gamma: float
    r_max: float
    partition: ClassPartition
    seed: int = 0
    horizon_override: int | None = None
    samples_override: int | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma!r}")
        if not self.r_max > 0:
            raise ValueError(f"r_max must be positive, got {self.r_max!r}")
        for name in ("horizon_override", "samples_override"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1, got {v!r}")

    @property
    def lam(self) -> float:
        return self.r_max / self.delta


def horizon_H(config: PlannerConfig) -> int:
    """Lookahead depth ``ceil(ln(4 lam / (1-g)^3) / (1-g))``, at least 1."""
    if config.horizon_override is not None:
        return int(config.horizon_override)
    g = config.gamma
    return max(1, math.ceil(math.log(4 * config.lam / (1 - g) ** 3) / (1 - g)))


def sample_count_C(config: PlannerConfig, num_actions: int, horizon: int | None = None) -> int:
    """Observations sampled per action per node (natural log throughout), at least 1."""
    if config.samples_override is not None:
        return int(config.samples_override)
    H = horizon_H(config) if horizon is None else horizon
    g, lam = config.gamma, config.lam
    inner = 2 * H * math.log(4 * num_actions * H * lam**2 / (1 - g) ** 4) + math.log(4 * lam / (1 - g))
    return max(1, math.ceil(4 * lam**2 / (1 - g) ** 6 * inner))


def node_bound(num_actions: int, samples: int, horizon: int) -> int:
    """Worst-case node count ``sum_{i<=H} (|A| C)^i`` of the sampled tree."""
    return sum((num_actions * samples) ** i for i in range(horizon + 1))


@dataclass
class SearchStats:
    nodes: int = 0


@dataclass(frozen=True)
class SearchNode:
    belief: np.ndarray  # simplified joint belief
    depth: int
    seed: int


def _search(model, partition, phi, depth, seed, gamma, samples, only_action=-1):
    return kernels.sparse_search(
        np.ascontiguousarray(phi, dtype=float), depth, seed & MASK64, model.transition_matrices,
        model.observation_model, model.rewards, partition.class_index, partition.class_sizes, float(gamma),
        int(samples), NodeStream(), only_action,
    )


def _root_probs(belief, partition: ClassPartition) -> np.ndarray:
    if isinstance(belief, SimplifiedBelief):
        return belief.probs
    return np.ascontiguousarray(simplify(as_probs(belief), partition))


def q_values(
    model: FactoredPomdp,
    belief,
    depth: int,
    samples: int,
    seed: int,
    partition: ClassPartition,
    gamma: float | None = None,
    stats: SearchStats | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Sampled ``Q(rho, a, depth)`` for every action at a simplified belief.

    Randomness is keyed by (node seed, action, observation), so ``workers``
    only changes scheduling: results are bit-identical for any worker count.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    g = model.discount if gamma is None else gamma
    stats = SearchStats() if stats is None else stats
    phi = _root_probs(belief, partition)
    if workers <= 1 or depth == 0 or model.num_actions == 1:
        q, nodes = _search(model, partition, phi, depth, seed, g, samples)
        stats.nodes += nodes
        return q
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_search, model, partition, phi, depth, seed, g, samples, a)
                   for a in range(model.num_actions)]
        parts = [f.result() for f in futures]
    q = np.array([qa[a] for a, (qa, _) in enumerate(parts)])
    # every task re-expands the shared root
    stats.nodes += sum(n for _, n in parts) - (model.num_actions - 1)
    return q


def q_value(model: FactoredPomdp, node: SearchNode, a: int, samples: int, partition: ClassPartition,
            gamma: float | None = None) -> float:
    """Sampled Q of one action at a search node; equals that entry of :func:`q_values`."""
    g = model.discount if gamma is None else gamma
    q, _ = _search(model, partition, node.belief, node.depth, node.seed, g, samples, a)
    return float(q[a])


@dataclass(frozen=True)
class Decision:
    action: int
    q: np.ndarray
    nodes: int
    horizon: int
    samples: int


def decide(model: FactoredPomdp, belief, config: PlannerConfig, seed: int | None = None,
           workers: int = 1) -> Decision:
    H = horizon_H(config)
    C = sample_count_C(config, model.num_actions, H)
    stats = SearchStats()
    q = q_values(model, belief, H, C, config.seed if seed is None else seed, config.partition,
                 config.gamma, stats, workers)
    return Decision(int(np.argmax(q)), q, stats.nodes, H, C)


def choose_action(model: FactoredPomdp, belief, config: PlannerConfig, seed: int | None = None) -> int:
    """Root action maximizing the sampled Q at depth H; ties go to the lowest index."""
    return decide(model, belief, config, seed).action


@dataclass
class PlannerPolicy:
    """The sparse-sampling policy as a deterministic function of the history.

    Each decision uses the seed ``derive_seed(config.seed, "decide", history)``.
    Decisions are cached per history.
    """

    model: FactoredPomdp
    config: PlannerConfig
    cache: dict = field(default_factory=dict, repr=False)
    name: str = "sparse-sampling"

    def decision(self, history, belief) -> Decision:
        key = history_key(history)
        hit = self.cache.get(key)
        if hit is None:
            hit = decide(self.model, belief, self.config, derive_seed(self.config.seed, "decide", key))
            self.cache[key] = hit
        return hit

    def __call__(self, history, belief) -> int:
        return self.decision(history, belief).action


# -- exhaustive oracle -------------------------------------------------------


@dataclass(frozen=True)
class LookaheadResult:
    value: float
    action: int
    q: np.ndarray
    nodes: int


def lookahead_size(num_actions: int, num_observations: int, depth: int) -> int:
    return sum((num_actions * num_observations) ** i for i in range(depth + 1))


def exact_lookahead(
    model: FactoredPomdp,
    belief,
    depth: int,
    mode: str = "true",
    partition: ClassPartition | None = None,
    gamma: float | None = None,
    budget: int = DEFAULT_NODE_BUDGET,
) -> LookaheadResult:
    """Depth-truncated expectimax over every observation, weighted by its exact probability.

    ``mode="true"`` follows exact belief updates; ``mode="simplified"``
    projects the root and every child onto ``partition``.  Observations with
    zero probability are pruned.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    estimate = lookahead_size(model.num_actions, model.num_observations, depth)
    if estimate > budget:
        raise BudgetExceeded(estimate, budget)
    phi = np.ascontiguousarray(as_probs(belief), dtype=float)
    if mode in ("true", "true_beliefs"):
        partition = ClassPartition.single(model.num_vars)
    elif mode == "simplified":
        if partition is None:
            partition = ClassPartition.of_model(model)
        phi = np.ascontiguousarray(simplify(phi, partition))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    g = model.discount if gamma is None else gamma
    trans, obs, rewards = model.transition_matrices, model.observation_model, model.rewards
    idx, sizes = partition.class_index, partition.class_sizes
    stats = SearchStats()

    def q_of(phi, d):
        stats.nodes += 1
        r = kernels.expected(phi, rewards)
        if d == 0:
            return np.full(model.num_actions, r)
        probs, children = kernels.expand(phi, trans, obs, idx, sizes)
        q = np.empty(model.num_actions)
        for a in range(model.num_actions):
            acc = 0.0
            for o in range(model.num_observations):
                p = probs[a, o]
                if p > kernels.MIN_EVIDENCE:
                    acc += p * q_of(children[a, o], d - 1).max()
            q[a] = r + g * acc
        return q

    q = q_of(phi, depth)
    a = int(np.argmax(q))
    return LookaheadResult(float(q[a]), a, q, stats.nodes)
