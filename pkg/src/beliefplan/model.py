"""Factored POMDP model, joint-state encoding, exact belief algebra and the hidden-state simulator.

Joint states are little-endian bit packings of the binary state variables:
variable ``i`` contributes bit ``i`` of the joint index.  Variables transition
conditionally independently given the full previous joint state and the
action, so the joint transition matrix is a product of per-variable CPT rows.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels

MAX_VARS = 20
ROW_TOL = 1e-9
RENORM_TOL = 1e-12
DRIFT_TOL = 1e-6

History = tuple  # tuple[tuple[int, int], ...]


class ModelError(ValueError):
    """An invariant violation in a model document, tagged with its location."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class ZeroObservationProbability(ArithmeticError):
    """Conditioning on an observation whose probability is (numerically) zero."""


def encode_state(assignment: Sequence[int], num_vars: int | None = None) -> int:
    if num_vars is not None and len(assignment) != num_vars:
        raise ValueError(f"assignment has {len(assignment)} bits, model has {num_vars} variables")
    index = 0
    for i, bit in enumerate(assignment):
        if bit not in (0, 1):
            raise ValueError(f"variable {i} has non-binary value {bit!r}")
        index |= int(bit) << i
    return index


def decode_state(index: int, num_vars: int) -> list[int]:
    if not 0 <= index < (1 << num_vars):
        raise ValueError(f"state {index} out of range for {num_vars} variables")
    return [(index >> i) & 1 for i in range(num_vars)]


def state_bits(num_vars: int) -> np.ndarray:
    """``(2**n, n)`` array of variable values for every joint state."""
    idx = np.arange(1 << num_vars)
    return ((idx[:, None] >> np.arange(num_vars)[None, :]) & 1).astype(np.intp)


@dataclass(frozen=True)
class CPT:
    """P(v'=1 | action, parents) with the table in little-endian parent order."""

    parents: tuple[int, ...]
    table: tuple[float, ...]


@dataclass(frozen=True)
class FactoredPomdp:
    num_vars: int
    actions: tuple[str, ...]
    observations: tuple[str, ...]
    transition: tuple[tuple[CPT, ...], ...]
    observation_model: np.ndarray
    rewards: np.ndarray
    r_max: float
    discount: float
    initial_state: int = 0
    classes: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        obs = np.ascontiguousarray(np.asarray(self.observation_model, dtype=float))
        rew = np.ascontiguousarray(np.asarray(self.rewards, dtype=float))
        obs.setflags(write=False)
        rew.setflags(write=False)
        object.__setattr__(self, "observation_model", obs)
        object.__setattr__(self, "rewards", rew)
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "observations", tuple(self.observations))
        self._validate()

    def _validate(self):
        n = self.num_vars
        if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_VARS:
            raise ModelError("num_vars", f"must be an integer in [1, {MAX_VARS}], got {n!r}")
        if len(self.actions) < 1:
            raise ModelError("actions", "at least one action required")
        if len(self.observations) < 1:
            raise ModelError("observations", "at least one observation required")
        S, A, O = 1 << n, len(self.actions), len(self.observations)
        if len(self.transition) != A:
            raise ModelError("transition", f"expected {A} action entries, got {len(self.transition)}")
        for a, per_var in enumerate(self.transition):
            if len(per_var) != n:
                raise ModelError(f"transition[{a}]", f"expected {n} variable entries, got {len(per_var)}")
            for v, cpt in enumerate(per_var):
                where = f"transition[{a}][{v}]"
                for j, p in enumerate(cpt.parents):
                    if not 0 <= p < n:
                        raise ModelError(f"{where}.parents[{j}]", f"variable index {p} out of range")
                if len(set(cpt.parents)) != len(cpt.parents):
                    raise ModelError(f"{where}.parents", "duplicate parent")
                if len(cpt.table) != 1 << len(cpt.parents):
                    raise ModelError(
                        f"{where}.table",
                        f"expected {1 << len(cpt.parents)} entries, got {len(cpt.table)}",
                    )
                for j, p in enumerate(cpt.table):
                    if not (0.0 <= p <= 1.0):
                        raise ModelError(f"{where}.table[{j}]", f"probability {p!r} outside [0, 1]")
        if self.observation_model.shape != (S, O):
            raise ModelError("observation_model", f"expected shape ({S}, {O}), got {self.observation_model.shape}")
        for s in range(S):
            row = self.observation_model[s]
            if np.any(~np.isfinite(row)) or np.any(row < 0):
                raise ModelError(f"observation_model[{s}]", "entries must be finite and non-negative")
            total = math.fsum(row)
            if abs(total - 1.0) > ROW_TOL:
                raise ModelError(f"observation_model[{s}]", f"row sums to {total!r}, not 1")
        if not (math.isfinite(self.r_max) and self.r_max >= 0):
            raise ModelError("r_max", f"must be finite and non-negative, got {self.r_max!r}")
        if self.rewards.shape != (S,):
            raise ModelError("rewards", f"expected {S} entries, got shape {self.rewards.shape}")
        for s in range(S):
            r = self.rewards[s]
            if not math.isfinite(r) or abs(r) > self.r_max:
                raise ModelError(f"rewards[{s}]", f"|{r!r}| exceeds r_max={self.r_max!r}")
        if not 0.0 <= self.discount < 1.0:
            raise ModelError("discount", f"must lie in [0, 1), got {self.discount!r}")
        if not isinstance(self.initial_state, (int, np.integer)) or not 0 <= self.initial_state < S:
            raise ModelError("initial_state", f"must be a state index in [0, {S}), got {self.initial_state!r}")
        if self.classes is not None:
            seen: set[int] = set()
            for k, cls in enumerate(self.classes):
                if not cls:
                    raise ModelError(f"classes[{k}]", "class is empty")
                for j, v in enumerate(cls):
                    if not 0 <= v < n:
                        raise ModelError(f"classes[{k}][{j}]", f"variable index {v} out of range")
                    if v in seen:
                        raise ModelError(f"classes[{k}][{j}]", f"variable {v} appears in two classes")
                    seen.add(v)
            if len(seen) != n:
                raise ModelError("classes", f"variables {sorted(set(range(n)) - seen)} not covered")

    @property
    def num_states(self) -> int:
        return 1 << self.num_vars

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    @property
    def num_observations(self) -> int:
        return len(self.observations)

    @cached_property
    def transition_matrices(self) -> np.ndarray:
        """``(A, S, S)`` array with ``T[a, s, s'] = P(s' | a, s)``."""
        S, n = self.num_states, self.num_vars
        bits = state_bits(n)
        out = np.empty((self.num_actions, S, S))
        for a, per_var in enumerate(self.transition):
            T = np.ones((S, S))
            for v, cpt in enumerate(per_var):
                idx = np.zeros(S, dtype=np.intp)
                for j, p in enumerate(cpt.parents):
                    idx |= bits[:, p] << j
                p_one = np.asarray(cpt.table, dtype=float)[idx]
                T *= np.where(bits[None, :, v] == 1, p_one[:, None], 1.0 - p_one[:, None])
            out[a] = T
        out.setflags(write=False)
        return out

    @cached_property
    def _sampling_tables(self):
        return _cumulative(self.transition_matrices), _cumulative(self.observation_model)

    def partition_classes(self) -> tuple[tuple[int, ...], ...]:
        """Declared classes, or one class holding every variable."""
        if self.classes is None:
            return (tuple(range(self.num_vars)),)
        return self.classes

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        doc = {
            "num_vars": int(self.num_vars),
            "actions": list(self.actions),
            "observations": list(self.observations),
            "transition": [
                [{"parents": [int(p) for p in cpt.parents], "table": [float(x) for x in cpt.table]} for cpt in per_var]
                for per_var in self.transition
            ],
            "observation_model": [[float(x) for x in row] for row in self.observation_model],
            "rewards": [float(x) for x in self.rewards],
            "r_max": float(self.r_max),
            "discount": float(self.discount),
            "initial_state": int(self.initial_state),
        }
        if self.classes is not None:
            doc["classes"] = [list(map(int, c)) for c in self.classes]
        return doc

    @classmethod
    def from_dict(cls, doc) -> "FactoredPomdp":
        if not isinstance(doc, dict):
            raise ModelError("", "model document must be an object")
        for key in ("num_vars", "actions", "observations", "transition", "observation_model", "rewards",
                    "r_max", "discount", "initial_state"):
            if key not in doc:
                raise ModelError(key, "missing required field")
        n = _expect_int(doc["num_vars"], "num_vars")
        if not 1 <= n <= MAX_VARS:
            raise ModelError("num_vars", f"must be in [1, {MAX_VARS}] (joint tables have 2^n rows), got {n}")
        actions = _expect_list(doc["actions"], "actions")
        observations = _expect_list(doc["observations"], "observations")
        transition = []
        for a, per_var in enumerate(_expect_list(doc["transition"], "transition")):
            row = []
            for v, entry in enumerate(_expect_list(per_var, f"transition[{a}]")):
                where = f"transition[{a}][{v}]"
                if not isinstance(entry, dict) or "parents" not in entry or "table" not in entry:
                    raise ModelError(where, "expected an object with 'parents' and 'table'")
                parents = tuple(
                    _expect_int(p, f"{where}.parents[{j}]")
                    for j, p in enumerate(_expect_list(entry["parents"], f"{where}.parents"))
                )
                table = tuple(
                    _expect_float(p, f"{where}.table[{j}]")
                    for j, p in enumerate(_expect_list(entry["table"], f"{where}.table"))
                )
                row.append(CPT(parents, table))
            transition.append(tuple(row))
        obs_rows = _expect_list(doc["observation_model"], "observation_model")
        obs = []
        for s, r in enumerate(obs_rows):
            obs.append([_expect_float(x, f"observation_model[{s}][{o}]")
                        for o, x in enumerate(_expect_list(r, f"observation_model[{s}]"))])
        widths = {len(r) for r in obs}
        if len(widths) > 1:
            raise ModelError("observation_model", "rows have different lengths")
        rewards = [_expect_float(x, f"rewards[{s}]") for s, x in enumerate(_expect_list(doc["rewards"], "rewards"))]
        classes = None
        if doc.get("classes") is not None:
            classes = tuple(
                tuple(_expect_int(v, f"classes[{k}][{j}]") for j, v in enumerate(_expect_list(c, f"classes[{k}]")))
                for k, c in enumerate(_expect_list(doc["classes"], "classes"))
            )
        return cls(
            num_vars=n,
            actions=tuple(str(x) for x in actions),
            observations=tuple(str(x) for x in observations),
            transition=tuple(transition),
            observation_model=np.array(obs, dtype=float).reshape(len(obs), -1 if obs else 0),
            rewards=np.array(rewards, dtype=float),
            r_max=_expect_float(doc["r_max"], "r_max"),
            discount=_expect_float(doc["discount"], "discount"),
            initial_state=_expect_int(doc["initial_state"], "initial_state"),
            classes=classes,
        )


def _expect_list(x, path):
    if not isinstance(x, list):
        raise ModelError(path, f"expected an array, got {type(x).__name__}")
    return x


def _expect_int(x, path):
    if isinstance(x, bool) or not isinstance(x, int):
        raise ModelError(path, f"expected an integer, got {x!r}")
    return x


def _expect_float(x, path):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ModelError(path, f"expected a number, got {x!r}")
    return float(x)


def _cumulative(rows: np.ndarray):
    """Cumulative rows plus the last positive index per row, for inverse-CDF sampling."""
    cum = np.cumsum(rows, axis=-1)
    positive = rows > 0
    last = rows.shape[-1] - 1 - np.argmax(positive[..., ::-1], axis=-1)
    return cum, last


def dumps_model(model: FactoredPomdp) -> str:
    return json.dumps(model.to_dict(), indent=1) + "\n"


def loads_model(text: str) -> FactoredPomdp:
    """Parse and validate a model document.

    Raises ``json.JSONDecodeError`` (with line/column) on malformed JSON and
    ``ModelError`` naming the first violated invariant otherwise.
    """
    return FactoredPomdp.from_dict(json.loads(text))


def load_model(path) -> FactoredPomdp:
    return loads_model(Path(path).read_text(encoding="utf-8"))


def save_model(model: FactoredPomdp, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


# -- beliefs -------------------------------------------------------------


@dataclass(frozen=True)
class BeliefState:
    """Dense distribution over joint states.

    Construction renormalizes when the total is off by more than 1e-12 and
    rejects vectors off by more than 1e-6 (that signals a logic error, not
    round-off).  Use :meth:`from_weights` for unnormalized input.
    """

    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("belief must be a non-empty vector")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("belief entries must be finite and non-negative")
        total = math.fsum(p)
        if abs(total - 1.0) > DRIFT_TOL:
            raise AssertionError(f"belief sums to {total!r}; expected 1")
        if abs(total - 1.0) > RENORM_TOL:
            p = p / total
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_weights(cls, weights) -> "BeliefState":
        w = np.asarray(weights, dtype=float)
        total = math.fsum(w)
        if not total > 0:
            raise ValueError("weights must have positive total mass")
        return cls(w / total)

    def __len__(self):
        return self.probs.shape[0]

    def __eq__(self, other):
        return isinstance(other, BeliefState) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())


def as_probs(belief) -> np.ndarray:
    if isinstance(belief, BeliefState):
        return belief.probs
    return np.ascontiguousarray(belief, dtype=float)


def materialize_transition(model: FactoredPomdp, a: int) -> np.ndarray:
    return np.array(model.transition_matrices[a])


def dirac_belief(model: FactoredPomdp) -> BeliefState:
    p = np.zeros(model.num_states)
    p[model.initial_state] = 1.0
    return BeliefState(p)


def predicted(model: FactoredPomdp, belief, a: int) -> np.ndarray:
    """One-step predicted distribution ``sum_s phi(s) P(.|a,s)``."""
    return kernels.predict(as_probs(belief), model.transition_matrices[a])


def observation_distribution(model: FactoredPomdp, belief, a: int) -> np.ndarray:
    """``P(.|a, phi)`` over all observations."""
    return kernels.obs_probs(predicted(model, belief, a), model.observation_model)


def obs_probability(model: FactoredPomdp, belief, a: int, o: int) -> float:
    return float(observation_distribution(model, belief, a)[o])


def belief_update(model: FactoredPomdp, belief, a: int, o: int) -> BeliefState:
    post, z = _update(model, as_probs(belief), a, o)
    return BeliefState(post)


def _update(model: FactoredPomdp, phi: np.ndarray, a: int, o: int):
    pred = kernels.predict(phi, model.transition_matrices[a])
    post, z = kernels.condition(pred, np.ascontiguousarray(model.observation_model[:, o]))
    if z <= kernels.MIN_EVIDENCE:
        raise ZeroObservationProbability(
            f"observation {o} has probability {z!r} after action {a}; posterior undefined"
        )
    return post, z


def expected_reward(model: FactoredPomdp, belief) -> float:
    return kernels.expected(as_probs(belief), model.rewards)


def true_belief(model: FactoredPomdp, history: History) -> BeliefState:
    """Exact belief after a history, starting from the point mass at the initial state."""
    phi = dirac_belief(model).probs
    for a, o in history:
        phi, _ = _update(model, phi, a, o)
    return BeliefState(phi)


def check_history(model: FactoredPomdp, history: History) -> None:
    for i, (a, o) in enumerate(history):
        if not 0 <= a < model.num_actions:
            raise ValueError(f"history[{i}]: action {a} out of range")
        if not 0 <= o < model.num_observations:
            raise ValueError(f"history[{i}]: observation {o} out of range")


# -- simulator -------------------------------------------------------------


@dataclass
class SimState:
    """Hidden state of the underlying MDP; owns its random stream."""

    state: int
    step: int
    rng: np.random.Generator


def new_sim(model: FactoredPomdp, rng: np.random.Generator) -> SimState:
    return SimState(model.initial_state, 0, rng)


def sim_step(model: FactoredPomdp, sim: SimState, a: int) -> tuple[int, float, SimState]:
    """Act in the hidden MDP.

    The reward is that of the state occupied when acting (the one being left).
    Draws two uniforms per step: next state, then observation.
    """
    (cum_t, last_t), (cum_o, last_o) = model._sampling_tables
    s = sim.state
    reward = float(model.rewards[s])
    u = sim.rng.random()
    s_next = min(int(np.searchsorted(cum_t[a, s], u * cum_t[a, s, -1], side="right")), int(last_t[a, s]))
    u = sim.rng.random()
    o = min(int(np.searchsorted(cum_o[s_next], u * cum_o[s_next, -1], side="right")), int(last_o[s_next]))
    return o, reward, SimState(s_next, sim.step + 1, sim.rng)
