"""Experiment configuration documents and the measure/check/plan pipelines behind the CLI."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .evaluator import (
    BoundReport,
    DriftTrace,
    ValueGapTrace,
    check_drift_bounds,
    check_drifting_bound,
    check_tracking_bound,
    drift_trace,
    value_gap_trace,
)
from .generator import GeneratorSpec, generate_model
from .model import FactoredPomdp, load_model, new_sim, sim_step
from .planner import PlannerConfig, PlannerPolicy, horizon_H, sample_count_C
from .policies import FixedPolicy, RandomPolicy
from .rng import MASK64, derive_seed, generator
from .simplifier import (
    ClassPartition,
    EpsilonEstimate,
    measure_kl_eps,
    measure_l1_eps,
    mixing_coefficient,
    simplify,
)
from .model import dirac_belief, _update


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: FactoredPomdp
    partition: ClassPartition
    seed: int
    delta: float = 1.0
    gamma_override: float | None = None
    horizon_override: int | None = None
    samples_override: int | None = None
    planner_seed: int | None = None
    episodes: int = 200
    T: int = 10
    T_sim: int = 20
    H_eval: int = 6
    eps_depth: int | None = None
    eps_episodes: int = 1000
    policy: str = "random"
    se_slack: float = 3.0
    out: Path | None = None
    source: dict = field(default_factory=dict)

    @property
    def gamma(self) -> float:
        return self.model.discount if self.gamma_override is None else self.gamma_override

    def planner_config(self) -> PlannerConfig:
        seed = derive_seed(self.seed, "planner") if self.planner_seed is None else self.planner_seed
        return PlannerConfig(
            delta=self.delta,
            gamma=self.gamma,
            r_max=self.model.r_max,
            partition=self.partition,
            seed=seed,
            horizon_override=self.horizon_override,
            samples_override=self.samples_override,
        )

    def stream(self, label: str) -> int:
        return derive_seed(self.seed, label)

    def measurement_policy(self):
        spec = self.policy
        if spec == "random":
            return RandomPolicy(self.model.num_actions, self.stream("policy"))
        if spec.startswith("fixed:"):
            a = int(spec.split(":", 1)[1])
            if not 0 <= a < self.model.num_actions:
                raise ConfigError(f"evaluator.policy: action {a} out of range")
            return FixedPolicy(a)
        if spec == "planner":
            return PlannerPolicy(self.model, self.planner_config())
        raise ConfigError(f"evaluator.policy: unknown policy {spec!r}")


def _partition(ref, model: FactoredPomdp) -> ClassPartition:
    if ref is None or ref == "model":
        return ClassPartition.of_model(model)
    if ref == "single":
        return ClassPartition.single(model.num_vars)
    if ref == "singletons":
        return ClassPartition.singletons(model.num_vars)
    if isinstance(ref, list):
        try:
            return ClassPartition(tuple(tuple(c) for c in ref), model.num_vars)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"partition: {exc}") from exc
    raise ConfigError(f"partition: unsupported reference {ref!r}")


def load_config(path, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    return config_from_dict(doc, base=path.parent, seed=seed, out=out)


def config_from_dict(doc: dict, base: Path = Path("."), seed: int | None = None,
                     out: str | None = None) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be an object")
    master = doc.get("seed", 0) if seed is None else seed
    if not isinstance(master, int) or not 0 <= master <= MASK64:
        raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {master!r}")
    if "model" in doc:
        model_path = base / doc["model"]
        if not model_path.exists():
            raise ConfigError(f"model: {model_path} not found")
        model = load_model(model_path)
    elif "generator" in doc:
        model = generate_model(GeneratorSpec.from_dict(doc["generator"]))
    else:
        raise ConfigError("config needs either 'model' or 'generator'")
    planner = doc.get("planner", {})
    evaluator = doc.get("evaluator", {})
    unknown = set(planner) - {"delta", "gamma_override", "horizon_override", "samples_override", "seed",
                              "partition_ref"}
    unknown |= set(evaluator) - {"episodes", "T", "T_sim", "H_eval", "eps_depth", "eps_episodes", "policy",
                                 "se_slack"}
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    partition = _partition(planner.get("partition_ref", doc.get("partition")), model)
    out_dir = out if out is not None else doc.get("out")
    return ExperimentConfig(
        model=model,
        partition=partition,
        seed=master,
        delta=float(planner.get("delta", 1.0)),
        gamma_override=planner.get("gamma_override"),
        horizon_override=planner.get("horizon_override"),
        samples_override=planner.get("samples_override"),
        planner_seed=planner.get("seed"),
        episodes=int(evaluator.get("episodes", 200)),
        T=int(evaluator.get("T", 10)),
        T_sim=int(evaluator.get("T_sim", 20)),
        H_eval=int(evaluator.get("H_eval", 6)),
        eps_depth=evaluator.get("eps_depth"),
        eps_episodes=int(evaluator.get("eps_episodes", 1000)),
        policy=str(evaluator.get("policy", "random")),
        se_slack=float(evaluator.get("se_slack", 3.0)),
        out=None if out_dir is None else (base / out_dir if out is None else Path(out_dir)),
        source=doc,
    )


# -- output helpers ----------------------------------------------------------------


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x: float):
    """JSON-safe float: infinities become strings."""
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def write_outputs(out: Path, files: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")


def _eps_csv(estimates) -> str:
    return csv_text(EpsilonEstimate.CSV_HEADER, [e.csv_row() for e in estimates])


def _eps_json(e: EpsilonEstimate) -> dict:
    return {"max": _num(e.max), "mean": _num(e.mean), "samples": e.samples, "depth": e.depth, "seed": e.seed,
            "exhaustive": e.exhaustive}


# -- pipelines ---------------------------------------------------------------------


@dataclass
class MeasureResult:
    eps_l1: EpsilonEstimate
    eps_kl: EpsilonEstimate
    eta: float
    trace: DriftTrace
    reports: list[BoundReport]
    files: dict[str, str]
    summary: dict


def run_measure(cfg: ExperimentConfig) -> MeasureResult:
    model, part = cfg.model, cfg.partition
    policy = cfg.measurement_policy()
    episode_seed = cfg.stream("measure")
    depth = cfg.T if cfg.eps_depth is None else int(cfg.eps_depth)
    eps_l1 = measure_l1_eps(model, part, depth, episodes=cfg.eps_episodes, seed=cfg.stream("l1-eps"))
    eps_kl = measure_kl_eps(model, part, policy, cfg.T, cfg.episodes, episode_seed)
    eta = mixing_coefficient(model)
    trace = drift_trace(model, part, policy, cfg.episodes, cfg.T, episode_seed)
    reports = check_drift_bounds(trace, eps_kl.max, eps_l1.max, eta, cfg.se_slack)
    files = {
        "drift.csv": csv_text(DriftTrace.CSV_HEADER, trace.csv_rows()),
        "epsilon.csv": _eps_csv([eps_l1, eps_kl]),
        "drift_bounds.csv": csv_text(BoundReport.CSV_HEADER, [r for rep in reports for r in rep.csv_rows()]),
    }
    summary = {
        "command": "measure",
        "seed": cfg.seed,
        "episode_seed": episode_seed,
        "policy": trace.policy,
        "partition": part.to_list(),
        "episodes": cfg.episodes,
        "T": cfg.T,
        "eta": _num(eta),
        "eps_l1": _eps_json(eps_l1),
        "eps_kl": _eps_json(eps_kl),
        "bounds": [r.summary() for r in reports],
        "passed": all(r.passed for r in reports),
    }
    files["summary.json"] = json.dumps(summary, indent=1, sort_keys=True) + "\n"
    return MeasureResult(eps_l1, eps_kl, eta, trace, reports, files, summary)


@dataclass
class CheckResult:
    tracking: BoundReport
    drifting: BoundReport
    trace: ValueGapTrace
    eps_l1: EpsilonEstimate
    eps_kl: EpsilonEstimate
    eta: float
    files: dict[str, str]
    summary: dict

    @property
    def passed(self) -> bool:
        return self.tracking.all_passed and self.drifting.all_passed


def run_check(cfg: ExperimentConfig) -> CheckResult:
    model, part = cfg.model, cfg.partition
    pconf = cfg.planner_config()
    policy = PlannerPolicy(model, pconf)
    episode_seed = cfg.stream("check")
    depth = cfg.T if cfg.eps_depth is None else int(cfg.eps_depth)
    eps_l1 = measure_l1_eps(model, part, depth, episodes=cfg.eps_episodes, seed=cfg.stream("l1-eps"))
    eps_kl = measure_kl_eps(model, part, policy, cfg.T, cfg.episodes, episode_seed)
    eta = mixing_coefficient(model)
    trace = value_gap_trace(model, part, policy, cfg.episodes, cfg.T, cfg.H_eval, episode_seed)
    tracking = check_tracking_bound(model, part, trace, cfg.delta, eps_kl.max, eta, cfg.se_slack)
    drifting = check_drifting_bound(model, part, trace, cfg.delta, eps_l1.max, cfg.se_slack)
    files = {
        "valuegap.csv": csv_text(ValueGapTrace.CSV_HEADER, trace.csv_rows()),
        "tracking.csv": csv_text(BoundReport.CSV_HEADER, tracking.csv_rows()),
        "drifting.csv": csv_text(BoundReport.CSV_HEADER, drifting.csv_rows()),
        "epsilon.csv": _eps_csv([eps_l1, eps_kl]),
    }
    H = horizon_H(pconf)
    summary = {
        "command": "check",
        "seed": cfg.seed,
        "episode_seed": episode_seed,
        "planner": {"delta": pconf.delta, "gamma": pconf.gamma, "r_max": pconf.r_max, "seed": pconf.seed,
                    "horizon": H, "samples": sample_count_C(pconf, model.num_actions, H)},
        "partition": part.to_list(),
        "episodes": cfg.episodes,
        "T": cfg.T,
        "H_eval": cfg.H_eval,
        "eta": _num(eta),
        "eps_l1": _eps_json(eps_l1),
        "eps_kl": _eps_json(eps_kl),
        "tracking": tracking.summary(),
        "drifting": drifting.summary(),
        "passed": tracking.all_passed and drifting.all_passed,
    }
    files["summary.json"] = json.dumps(summary, indent=1, sort_keys=True) + "\n"
    return CheckResult(tracking, drifting, trace, eps_l1, eps_kl, eta, files, summary)


@dataclass
class PlanResult:
    rows: list
    discounted_return: float
    files: dict[str, str]


def run_plan(cfg: ExperimentConfig, steps: int | None = None) -> PlanResult:
    """Run the planner online for ``steps`` true-POMDP steps and log each decision."""
    model, part = cfg.model, cfg.partition
    policy = PlannerPolicy(model, cfg.planner_config())
    steps = cfg.T if steps is None else steps
    sim = new_sim(model, generator(cfg.stream("plan"), "episode", 0))
    beta_hat = simplify(dirac_belief(model), part)
    history: tuple = ()
    rows = []
    total, weight = 0.0, 1.0
    for t in range(steps):
        d = policy.decision(history, beta_hat)
        o, r, sim = sim_step(model, sim, d.action)
        rows.append((t, d.action, *(repr(float(q)) for q in d.q), o, repr(r), d.nodes, d.horizon, d.samples))
        total += weight * r
        weight *= model.discount
        pre, _ = _update(model, beta_hat, d.action, o)
        beta_hat = simplify(pre, part)
        history = history + ((d.action, o),)
    header = ("t", "action", *(f"q_{a}" for a in range(model.num_actions)), "observation", "reward", "nodes",
              "horizon", "samples")
    files = {"decisions.csv": csv_text(header, rows)}
    return PlanResult(rows, total, files)


def plan_seed(cfg: ExperimentConfig) -> int:
    """Seed of the simulation stream used by :func:`run_plan` (episode 0 of the ``plan`` stream)."""
    return derive_seed(cfg.stream("plan"), "episode", 0)
