from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from beliefplan.model import CPT, FactoredPomdp

DATA = Path(__file__).resolve().parents[1] / "src" / "beliefplan" / "data"


def random_model(rng: np.random.Generator, n: int, A: int, O: int, *, discount: float = 0.5,
                 sharp: bool = False, classes=None) -> FactoredPomdp:
    """Random model with random parent sets; ``sharp`` puts some CPT entries at exactly 0 or 1."""
    transition = []
    for _ in range(A):
        per_var = []
        for v in range(n):
            others = [u for u in range(n) if u != v]
            k = int(rng.integers(0, len(others) + 1))
            parents = (v, *sorted(int(u) for u in rng.choice(others, size=k, replace=False))) if others else (v,)
            table = rng.random(1 << len(parents))
            if sharp:
                table = np.where(rng.random(table.shape) < 0.2, np.round(table), table)
            per_var.append(CPT(parents, tuple(float(x) for x in table)))
        transition.append(tuple(per_var))
    obs = rng.dirichlet(np.ones(O), size=1 << n)
    if sharp:
        obs = np.where(rng.random(obs.shape) < 0.2, 0.0, obs) + 1e-3 * np.eye(O)[rng.integers(O, size=1 << n)]
        obs /= obs.sum(axis=1, keepdims=True)
    if classes is None:
        half = max(1, n // 2)
        classes = (tuple(range(half)), tuple(range(half, n))) if n > 1 else ((0,),)
    return FactoredPomdp(
        num_vars=n,
        actions=tuple(f"a{i}" for i in range(A)),
        observations=tuple(f"o{i}" for i in range(O)),
        transition=tuple(transition),
        observation_model=obs,
        rewards=rng.random(1 << n),
        r_max=1.0,
        discount=discount,
        initial_state=int(rng.integers(1 << n)),
        classes=classes,
    )


def constant_model(reward: float = 1.0, discount: float = 0.9, num_actions: int = 1) -> FactoredPomdp:
    """One variable stuck at 0 (an effectively single-state chain), one observation."""
    stay = CPT((0,), (0.0, 0.0))
    return FactoredPomdp(
        num_vars=1,
        actions=tuple(f"a{i}" for i in range(num_actions)),
        observations=("o",),
        transition=tuple((stay,) for _ in range(num_actions)),
        observation_model=np.ones((2, 1)),
        rewards=np.array([reward, reward]),
        r_max=max(abs(reward), 1.0),
        discount=discount,
        initial_state=0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir() -> Path:
    return DATA
