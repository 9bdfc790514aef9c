"""Monte Carlo evaluation in the true POMDP and empirical checks of the tracking/drifting bounds.

Expectations over histories of length ``t`` are episode averages; a bound
"holds" at ``t`` when ``mean <= bound + slack`` where the slack is
``se_slack`` standard errors plus, for value gaps, the lookahead truncation
term ``gamma**(H_eval+1) * R_max / (1 - gamma)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import FactoredPomdp, dirac_belief
from .planner import exact_lookahead
from .rng import generator, history_key
from .simplifier import ClassPartition, l1_distance, kl_divergence, simplify, track

log = logging.getLogger(__name__)


def v_max(model: FactoredPomdp) -> float:
    return model.r_max / (1.0 - model.discount)


def truncation_tail(model: FactoredPomdp, steps: int) -> float:
    """Largest discounted reward mass beyond the first ``steps`` rewards."""
    return model.discount**steps * model.r_max / (1.0 - model.discount)


def _mean_se(values) -> tuple[float, float]:
    """Mean and standard error, summed in the given order."""
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    if any(math.isinf(v) for v in values):
        return math.inf, math.inf
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


# -- returns -------------------------------------------------------------------


def rollout_return(model: FactoredPomdp, policy, T_sim: int, rng: np.random.Generator,
                   partition: ClassPartition | None = None) -> float:
    """Discounted return of one ``T_sim``-step episode; the policy sees the simplified belief."""
    if T_sim < 1:
        raise ValueError("T_sim must be >= 1")
    partition = ClassPartition.of_model(model) if partition is None else partition
    total, weight = 0.0, 1.0
    for step in track(model, partition, policy, T_sim, rng):
        total += weight * step.reward
        weight *= model.discount
    return total


def estimate_value(model: FactoredPomdp, policy, episodes: int, T_sim: int, seed: int,
                   partition: ClassPartition | None = None) -> tuple[float, float]:
    """Mean discounted return and the half-width of its normal 95% interval."""
    if episodes < 2:
        raise ValueError("episodes must be >= 2")
    returns = [
        rollout_return(model, policy, T_sim, generator(seed, "episode", e), partition) for e in range(episodes)
    ]
    mean, se = _mean_se(returns)
    return mean, 1.959963984540054 * se


# -- belief drift --------------------------------------------------------------


@dataclass
class DriftTrace:
    """Per-step statistics of ``||beta - beta_hat||_1`` and ``D(beta||beta_hat)`` (nats) over episodes."""

    l1_mean: list[float]
    l1_max: list[float]
    l1_se: list[float]
    kl_mean: list[float]
    kl_max: list[float]
    kl_se: list[float]
    episodes: int
    policy: str
    seed: int

    CSV_HEADER = ("t", "l1_mean", "l1_max", "l1_se", "kl_mean", "kl_max", "kl_se")

    @property
    def steps(self) -> int:
        return len(self.l1_mean) - 1

    def csv_rows(self):
        for t in range(len(self.l1_mean)):
            yield (t, *(repr(float(col[t])) for col in
                        (self.l1_mean, self.l1_max, self.l1_se, self.kl_mean, self.kl_max, self.kl_se)))


def drift_trace(model: FactoredPomdp, partition: ClassPartition, policy, episodes: int, T: int,
                seed: int) -> DriftTrace:
    """Exact and simplified beliefs tracked along ``policy``'s trajectories for ``t = 0..T``."""
    l1 = [[] for _ in range(T + 1)]
    kl = [[] for _ in range(T + 1)]
    for e in range(episodes):
        beta = dirac_belief(model).probs
        beta_hat = simplify(beta, partition)
        l1[0].append(l1_distance(beta, beta_hat))
        kl[0].append(kl_divergence(beta, beta_hat))
        for step in track(model, partition, policy, T, generator(seed, "episode", e)):
            l1[step.t + 1].append(l1_distance(step.next_belief, step.next_simplified))
            kl[step.t + 1].append(kl_divergence(step.next_belief, step.next_simplified))
    l1_stats = [_mean_se(v) for v in l1]
    kl_stats = [_mean_se(v) for v in kl]
    return DriftTrace(
        l1_mean=[m for m, _ in l1_stats],
        l1_max=[max(v) for v in l1],
        l1_se=[s for _, s in l1_stats],
        kl_mean=[m for m, _ in kl_stats],
        kl_max=[max(v) for v in kl],
        kl_se=[s for _, s in kl_stats],
        episodes=episodes,
        policy=getattr(policy, "name", type(policy).__name__),
        seed=seed,
    )


# -- bound reports -------------------------------------------------------------


@dataclass(frozen=True)
class BoundRow:
    t: int
    measured: float
    std_err: float
    bound: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound + self.slack


@dataclass
class BoundReport:
    """Measured quantity vs. theoretical bound per step.

    ``tag`` is one of tracking, drifting, drift_L1, drift_KL, pinsker,
    reward_gap, obsdist_gap.  A vacuous report (hypothesis unmet, bound
    infinite) passes and says so.
    """

    tag: str
    rows: list[BoundRow]
    inputs: dict
    vacuous: bool = False
    supporting: list["BoundReport"] = field(default_factory=list)

    CSV_HEADER = ("tag", "t", "measured", "std_err", "bound", "slack", "pass")

    @property
    def passed(self) -> bool:
        return self.vacuous or all(r.passed for r in self.rows)

    @property
    def all_passed(self) -> bool:
        return self.passed and all(r.all_passed for r in self.supporting)

    def violations(self) -> list[BoundRow]:
        return [] if self.vacuous else [r for r in self.rows if not r.passed]

    def csv_rows(self):
        for rep in (self, *self.supporting):
            for r in rep.rows:
                yield (rep.tag, r.t, repr(float(r.measured)), repr(float(r.std_err)), repr(float(r.bound)),
                       repr(float(r.slack)), int(rep.vacuous or r.passed))

    def summary(self) -> dict:
        return {
            "tag": self.tag,
            "passed": self.passed,
            "vacuous": self.vacuous,
            "violations": [r.t for r in self.violations()],
            "supporting": [s.summary() for s in self.supporting],
        }


def _report(tag, means, ses, bound_fn, inputs, se_slack, extra_slack=0.0, vacuous=False) -> BoundReport:
    rows = []
    for t, (m, se) in enumerate(zip(means, ses)):
        b = bound_fn(t)
        rows.append(BoundRow(t, m, se, b, se_slack * se + extra_slack))
    if vacuous:
        log.warning("%s bound is vacuous (%s)", tag, inputs.get("vacuous_reason", "hypothesis unmet"))
    return BoundReport(tag, rows, dict(inputs), vacuous)


def kl_drift_bound(eps_kl: float, eta: float) -> float:
    return math.inf if eta <= 0 else eps_kl / eta


def pinsker_drift_bound(eps_kl: float, eta: float) -> float:
    return math.inf if eta <= 0 else math.sqrt(2.0 * max(eps_kl, 0.0) / eta)


def l1_drift_bound(eps_l1: float, t: int) -> float:
    return 4.0 * eps_l1 * (t + 1)


def check_drift_bounds(trace: DriftTrace, eps_kl: float, eps_l1: float, eta: float,
                       se_slack: float = 3.0) -> list[BoundReport]:
    """KL drift <= eps_KL/eta, L1 drift <= sqrt(2 eps_KL/eta), L1 drift <= 4 eps_L1 (t+1)."""
    vac = eta <= 0 or math.isinf(eps_kl)
    inputs = {"eps_kl": eps_kl, "eps_l1": eps_l1, "eta": eta, "episodes": trace.episodes}
    if vac:
        inputs["vacuous_reason"] = "eta = 0" if eta <= 0 else "eps_KL infinite"
    return [
        _report("drift_KL", trace.kl_mean, trace.kl_se, lambda t: kl_drift_bound(eps_kl, eta), inputs, se_slack,
                vacuous=vac),
        _report("pinsker", trace.l1_mean, trace.l1_se, lambda t: pinsker_drift_bound(eps_kl, eta), inputs,
                se_slack, vacuous=vac),
        _report("drift_L1", trace.l1_mean, trace.l1_se, lambda t: l1_drift_bound(eps_l1, t), inputs, se_slack),
    ]


def tracking_bound(delta: float, eps_kl: float, eta: float, r_max: float, gamma: float) -> float:
    if eta <= 0 or math.isinf(eps_kl):
        return math.inf
    return delta + 3.0 * r_max / (1.0 - gamma) ** 2 * math.sqrt(2.0 * max(eps_kl, 0.0) / eta)


def drifting_bound(delta: float, eps_l1: float, r_max: float, gamma: float, t: int) -> float:
    return delta + 12.0 * eps_l1 * r_max / (1.0 - gamma) ** 3 + 12.0 * eps_l1 * r_max * t / (1.0 - gamma) ** 2


# -- value gaps along planner histories ----------------------------------------


@dataclass
class ValueGapTrace:
    """Per-step samples along histories generated by running the planner in the true POMDP."""

    gap: list[list[float]]  # |V^A - V*|
    gap_to_simplified_opt: list[list[float]]  # |V^A - V^*_hat|
    opt_gap: list[list[float]]  # |V^*_hat - V*|
    reward_gap: list[list[float]]  # |R - R_hat|
    obs_gap: list[list[float]]  # ||P(.|a,rho) - P_hat(.|a,rho)||_1 for the chosen a
    belief_gap: list[list[float]]  # ||beta - beta_hat||_1
    policy_value: list[list[float]]
    optimal_value: list[list[float]]
    h_eval: int
    episodes: int

    CSV_HEADER = ("t", "gap_mean", "gap_se", "gap_vs_hat_opt_mean", "hat_opt_vs_opt_mean", "policy_value_mean",
                  "optimal_value_mean")

    def csv_rows(self):
        for t in range(len(self.gap)):
            g, se = _mean_se(self.gap[t])
            cols = (g, se, _mean_se(self.gap_to_simplified_opt[t])[0], _mean_se(self.opt_gap[t])[0],
                    _mean_se(self.policy_value[t])[0], _mean_se(self.optimal_value[t])[0])
            yield (t, *(repr(float(c)) for c in cols))


class _ValueOracle:
    """Memoized truncated values along one policy's history tree."""

    def __init__(self, model, partition, policy, h_eval):
        self.model, self.partition, self.policy, self.h_eval = model, partition, policy, h_eval
        self._policy_values: dict = {}
        self._opt: dict = {}
        self._hat_opt: dict = {}

    def policy_value(self, history, beta, beta_hat, d) -> float:
        """Exact d-step truncated value of the (deterministic, history-keyed) policy in the true POMDP."""
        key = (history_key(history), d)
        hit = self._policy_values.get(key)
        if hit is not None:
            return hit
        m = self.model
        r = kernels.expected(beta, m.rewards)
        if d == 0:
            value = r
        else:
            a = int(self.policy(history, beta_hat))
            pred = kernels.predict(beta, m.transition_matrices[a])
            pred_hat = kernels.predict(beta_hat, m.transition_matrices[a])
            probs = kernels.obs_probs(pred, m.observation_model)
            acc = 0.0
            for o in range(m.num_observations):
                if probs[o] <= kernels.MIN_EVIDENCE:
                    continue
                col = np.ascontiguousarray(m.observation_model[:, o])
                nb, _ = kernels.condition(pred, col)
                pre, _ = kernels.condition(pred_hat, col)
                nbh = simplify(pre, self.partition)
                acc += probs[o] * self.policy_value(history + ((a, o),), nb, nbh, d - 1)
            value = r + m.discount * acc
        self._policy_values[key] = value
        return value

    def optimal(self, history, beta) -> float:
        key = history_key(history)
        if key not in self._opt:
            self._opt[key] = exact_lookahead(self.model, beta, self.h_eval, "true").value
        return self._opt[key]

    def simplified_optimal(self, history, beta_hat) -> float:
        key = history_key(history)
        if key not in self._hat_opt:
            self._hat_opt[key] = exact_lookahead(self.model, beta_hat, self.h_eval, "simplified",
                                                 self.partition).value
        return self._hat_opt[key]


def value_gap_trace(model: FactoredPomdp, partition: ClassPartition, policy, episodes: int, T: int,
                    h_eval: int, seed: int) -> ValueGapTrace:
    """Sample histories of length ``0..T`` under ``policy`` and measure value, reward and observation gaps.

    ``V^A`` and ``V*`` are truncated after ``h_eval`` steps (``h_eval + 1`` rewards).
    """
    oracle = _ValueOracle(model, partition, policy, h_eval)
    cols = {name: [[] for _ in range(T + 1)] for name in
            ("gap", "gap_to_simplified_opt", "opt_gap", "reward_gap", "obs_gap", "belief_gap", "policy_value",
             "optimal_value")}
    m = model
    for e in range(episodes):
        history: tuple = ()
        steps = list(track(m, partition, policy, T + 1, generator(seed, "episode", e)))
        for t in range(T + 1):
            step = steps[t]
            beta, beta_hat = step.belief, step.simplified
            va = oracle.policy_value(history, beta, beta_hat, h_eval)
            vs = oracle.optimal(history, beta)
            vh = oracle.simplified_optimal(history, beta_hat)
            a = step.action
            p = kernels.obs_probs(kernels.predict(beta, m.transition_matrices[a]), m.observation_model)
            ph = kernels.obs_probs(kernels.predict(beta_hat, m.transition_matrices[a]), m.observation_model)
            cols["gap"][t].append(abs(va - vs))
            cols["gap_to_simplified_opt"][t].append(abs(va - vh))
            cols["opt_gap"][t].append(abs(vh - vs))
            cols["reward_gap"][t].append(abs(kernels.expected(beta, m.rewards) - kernels.expected(beta_hat, m.rewards)))
            cols["obs_gap"][t].append(l1_distance(p, ph))
            cols["belief_gap"][t].append(l1_distance(beta, beta_hat))
            cols["policy_value"][t].append(va)
            cols["optimal_value"][t].append(vs)
            history = history + ((step.action, step.observation),)
    return ValueGapTrace(**cols, h_eval=h_eval, episodes=episodes)


def _column(samples):
    stats = [_mean_se(v) for v in samples]
    return [m for m, _ in stats], [s for _, s in stats]


def check_tracking_bound(model: FactoredPomdp, partition: ClassPartition, trace: ValueGapTrace, delta: float,
                         eps_kl: float, eta: float, se_slack: float = 3.0) -> BoundReport:
    """Mean |V^A - V*| against ``delta + 3 R_max/(1-g)^2 sqrt(2 eps_KL/eta)``, plus the reward and observation gap checks."""
    g, r_max = model.discount, model.r_max
    trunc = truncation_tail(model, trace.h_eval + 1)
    vac = eta <= 0 or math.isinf(eps_kl)
    inputs = {"eps_kl": eps_kl, "eta": eta, "gamma": g, "r_max": r_max, "delta": delta, "h_eval": trace.h_eval,
              "truncation": trunc, "episodes": trace.episodes}
    if vac:
        inputs["vacuous_reason"] = "eta = 0" if eta <= 0 else "eps_KL infinite"
    main = _report("tracking", *_column(trace.gap), lambda t: tracking_bound(delta, eps_kl, eta, r_max, g), inputs,
                   se_slack, trunc, vac)
    main.supporting = [
        _report("obsdist_gap", *_column(trace.obs_gap), lambda t: pinsker_drift_bound(eps_kl, eta), inputs,
                se_slack, vacuous=vac),
        _report("reward_gap", *_column(trace.reward_gap), lambda t: r_max * pinsker_drift_bound(eps_kl, eta),
                inputs, se_slack, vacuous=vac),
    ]
    return main


def check_drifting_bound(model: FactoredPomdp, partition: ClassPartition, trace: ValueGapTrace, delta: float,
                         eps_l1: float, se_slack: float = 3.0) -> BoundReport:
    """Mean |V^A - V*| against the linear-in-t bound, plus belief, reward and observation drift."""
    g, r_max = model.discount, model.r_max
    trunc = truncation_tail(model, trace.h_eval + 1)
    inputs = {"eps_l1": eps_l1, "gamma": g, "r_max": r_max, "delta": delta, "h_eval": trace.h_eval,
              "truncation": trunc, "episodes": trace.episodes}
    main = _report("drifting", *_column(trace.gap), lambda t: drifting_bound(delta, eps_l1, r_max, g, t), inputs,
                   se_slack, trunc)
    main.supporting = [
        _report("drift_L1", *_column(trace.belief_gap), lambda t: l1_drift_bound(eps_l1, t), inputs, se_slack),
        _report("reward_gap", *_column(trace.reward_gap), lambda t: r_max * l1_drift_bound(eps_l1, t), inputs,
                se_slack),
        _report("obsdist_gap", *_column(trace.obs_gap), lambda t: l1_drift_bound(eps_l1, t), inputs, se_slack),
    ]
    return main

