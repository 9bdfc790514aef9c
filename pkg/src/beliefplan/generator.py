"""Random factored POMDP instances with a guaranteed mixing floor."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .model import CPT, MAX_VARS, FactoredPomdp
from .rng import generator


@dataclass(frozen=True)
class GeneratorSpec:
    num_vars: int = 2
    num_actions: int = 2
    num_observations: int = 2
    eta_min: float = 0.0
    obs_determinism: float = 0.5
    reward_range: tuple[float, float] = (0.0, 1.0)
    discount: float = 0.5
    num_classes: int = 2
    max_parents: int = 2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "reward_range", tuple(float(x) for x in self.reward_range))
        if not 1 <= self.num_vars <= MAX_VARS:
            raise ValueError(f"num_vars must be in [1, {MAX_VARS}]")
        if self.num_actions < 1 or self.num_observations < 1:
            raise ValueError("need at least one action and one observation")
        if not 0.0 <= self.eta_min <= 1.0:
            raise ValueError("eta_min must lie in [0, 1]")
        if not 0.0 <= self.obs_determinism <= 1.0:
            raise ValueError("obs_determinism must lie in [0, 1]")
        lo, hi = self.reward_range
        if not lo <= hi:
            raise ValueError("reward_range must be (low, high) with low <= high")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if not 1 <= self.num_classes <= self.num_vars:
            raise ValueError("num_classes must be between 1 and num_vars")
        if self.max_parents < 1:
            raise ValueError("max_parents must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown generator fields: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reward_range"] = list(self.reward_range)
        return d


def uniform_weight(eta_min: float, num_vars: int) -> float:
    """Per-variable weight on the uniform row that gives joint overlap >= eta_min.

    Overlap of two product distributions is at least the product of the
    per-variable overlaps, and each mixed binary row pair overlaps by at
    least the uniform weight.
    """
    return eta_min ** (1.0 / num_vars)


def generate_model(spec: GeneratorSpec) -> FactoredPomdp:
    """Deterministic in ``spec.seed``.

    Each variable's parents are itself plus up to ``max_parents - 1``
    variables from other classes, so classes become correlated.  CPT rows are
    mixed with the uniform row (see :func:`uniform_weight`).  Each state emits
    a preferred observation with weight ``obs_determinism``, the rest of the
    mass is Dirichlet noise.
    """
    rng = generator(spec.seed, "generate")
    n, S = spec.num_vars, 1 << spec.num_vars
    classes = tuple(tuple(int(v) for v in chunk) for chunk in np.array_split(np.arange(n), spec.num_classes))
    class_of = {v: k for k, c in enumerate(classes) for v in c}
    w = uniform_weight(spec.eta_min, n)
    transition = []
    for _a in range(spec.num_actions):
        per_var = []
        for v in range(n):
            others = [u for u in range(n) if u != v and (class_of[u] != class_of[v] or spec.num_classes == 1)]
            extra = min(spec.max_parents - 1, len(others))
            chosen = rng.choice(others, size=extra, replace=False) if extra else []
            parents = (v, *sorted(int(u) for u in chosen))
            raw = rng.random(1 << len(parents))
            table = w * 0.5 + (1.0 - w) * raw
            per_var.append(CPT(parents, tuple(float(x) for x in table)))
        transition.append(tuple(per_var))
    O = spec.num_observations
    preferred = rng.integers(O, size=S)
    noise = rng.dirichlet(np.ones(O), size=S)
    obs = (1.0 - spec.obs_determinism) * noise
    obs[np.arange(S), preferred] += spec.obs_determinism
    obs /= obs.sum(axis=1, keepdims=True)
    lo, hi = spec.reward_range
    rewards = lo + (hi - lo) * rng.random(S)
    r_max = max(abs(lo), abs(hi))
    if r_max == 0.0:
        r_max = 1.0
    return FactoredPomdp(
        num_vars=n,
        actions=tuple(f"a{i}" for i in range(spec.num_actions)),
        observations=tuple(f"o{i}" for i in range(O)),
        transition=tuple(transition),
        observation_model=obs,
        rewards=rewards,
        r_max=float(r_max),
        discount=float(spec.discount),
        initial_state=int(rng.integers(S)),
        classes=classes,
    )
