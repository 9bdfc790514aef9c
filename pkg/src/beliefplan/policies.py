"""Simple history-indexed policies.

A policy is any callable ``policy(history, simplified_probs) -> action``
with a ``name`` attribute.  Randomized policies hash the history into their
seed so the chosen action is a pure function of (seed, history).
"""
from __future__ import annotations

from dataclasses import dataclass

from .rng import derive_seed, history_key


@dataclass(frozen=True)
class FixedPolicy:
    action: int = 0

    @property
    def name(self) -> str:
        return f"fixed:{self.action}"

    def __call__(self, history, belief) -> int:
        return self.action


@dataclass(frozen=True)
class RandomPolicy:
    num_actions: int
    seed: int = 0

    @property
    def name(self) -> str:
        return f"random:{self.seed}"

    def __call__(self, history, belief) -> int:
        return derive_seed(self.seed, "act", history_key(history)) % self.num_actions
