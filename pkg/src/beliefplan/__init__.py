"""Planning in factored POMDPs over class-projected belief states."""
from __future__ import annotations

from .generator import GeneratorSpec, generate_model
from .kernels import BACKEND
from .model import BeliefState, FactoredPomdp, belief_update, dirac_belief, load_model, save_model
from .planner import PlannerConfig, PlannerPolicy, choose_action, exact_lookahead, q_values
from .simplifier import ClassPartition, measure_kl_eps, measure_l1_eps, mixing_coefficient, project, simplify

__all__ = [
    "BACKEND",
    "BeliefState",
    "ClassPartition",
    "FactoredPomdp",
    "GeneratorSpec",
    "PlannerConfig",
    "PlannerPolicy",
    "belief_update",
    "choose_action",
    "dirac_belief",
    "exact_lookahead",
    "generate_model",
    "load_model",
    "measure_kl_eps",
    "measure_l1_eps",
    "mixing_coefficient",
    "project",
    "q_values",
    "save_model",
    "simplify",
]
