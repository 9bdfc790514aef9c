"""``beliefplan`` command line.

Exit codes: 0 success/pass, 1 validation or bound failure, 2 usage error,
3 search budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .experiment import ConfigError, load_config, run_check, run_measure, run_plan
from .generator import GeneratorSpec, generate_model
from .model import BeliefState, ModelError, dirac_belief, dumps_model, load_model
from .planner import BudgetExceeded, exact_lookahead

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3


def _print_table(header, rows, file=None):
    file = sys.stdout if file is None else file
    cells = [list(map(str, header))] + [[_short(c) for c in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    for row in cells:
        print("  ".join(c.rjust(w) for c, w in zip(row, widths)), file=file)


def _short(x) -> str:
    try:
        v = float(x)
    except (TypeError, ValueError):
        return str(x)
    if isinstance(x, int) or (isinstance(x, str) and x.lstrip("-").isdigit()):
        return str(x)
    return f"{v:.6g}"


def _read_csv(text: str):
    lines = text.strip().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def cmd_gen(args) -> int:
    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        doc = doc.get("generator", doc)
    for key in ("num_vars", "num_actions", "num_observations", "eta_min", "obs_determinism", "discount",
                "num_classes"):
        val = getattr(args, key)
        if val is not None:
            doc[key] = val
    if args.reward_range is not None:
        doc["reward_range"] = args.reward_range
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        spec = GeneratorSpec.from_dict(doc)
    except (TypeError, ValueError) as exc:
        print(f"error: invalid generator spec: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = dumps_model(generate_model(spec))
    if args.out is None:
        sys.stdout.write(text)
        return EXIT_OK
    out = Path(args.out)
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "model.json"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    print(out)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        model = load_model(args.model)
    except json.JSONDecodeError as exc:
        print(f"invalid: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}", file=sys.stderr)
        return EXIT_FAIL
    except ModelError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"valid: {model.num_vars} variables, {model.num_actions} actions, {model.num_observations} observations")
    return EXIT_OK


def _belief(spec: str, model) -> BeliefState:
    if spec == "dirac":
        return dirac_belief(model)
    if spec == "uniform":
        return BeliefState(np.full(model.num_states, 1.0 / model.num_states))
    values = [float(x) for x in spec.split(",")]
    if len(values) != model.num_states:
        raise ValueError(f"belief has {len(values)} entries, model has {model.num_states} states")
    return BeliefState.from_weights(values)


def cmd_oracle(args) -> int:
    model = load_model(args.model)
    try:
        belief = _belief(args.belief, model)
    except ValueError as exc:
        print(f"error: --belief: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        res = exact_lookahead(model, belief, args.depth, args.mode, gamma=None, budget=args.budget)
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    if args.pretty:
        _print_table(("action", "q"), [(a, q) for a, q in enumerate(res.q)])
        print(f"value {res.value:.10g}  argmax {res.action}  nodes {res.nodes}")
    else:
        print(f"value,{res.value!r}")
        print(f"argmax,{res.action}")
        print(f"nodes,{res.nodes}")
        for a, q in enumerate(res.q):
            print(f"q_{a},{float(q)!r}")
    return EXIT_OK


def _config(args):
    return load_config(args.config, seed=args.seed, out=args.out)


def _emit(files: dict, out, pretty: bool, show: str):
    if out is not None:
        from .experiment import write_outputs

        write_outputs(Path(out), files)
    if pretty:
        header, rows = _read_csv(files[show])
        _print_table(header, rows)
    elif out is None:
        sys.stdout.write(files[show])


def cmd_plan(args) -> int:
    cfg = _config(args)
    res = run_plan(cfg, args.steps)
    _emit(res.files, cfg.out, args.pretty, "decisions.csv")
    print(f"discounted_return,{res.discounted_return!r}", file=sys.stderr)
    return EXIT_OK


def cmd_measure(args) -> int:
    cfg = _config(args)
    res = run_measure(cfg)
    _emit(res.files, cfg.out, args.pretty, "drift.csv")
    s = res.summary
    print(f"eta,{res.eta!r}", file=sys.stderr)
    print(f"eps_l1,{res.eps_l1.max!r}", file=sys.stderr)
    print(f"eps_kl,{res.eps_kl.max!r}", file=sys.stderr)
    return EXIT_OK if s["passed"] else EXIT_FAIL


def cmd_check(args) -> int:
    cfg = _config(args)
    res = run_check(cfg)
    _emit(res.files, cfg.out, args.pretty, "valuegap.csv")
    for rep in (res.tracking, res.drifting):
        for r in (rep, *rep.supporting):
            state = "vacuous" if r.vacuous else ("pass" if r.passed else "FAIL")
            print(f"{rep.tag}/{r.tag},{state}", file=sys.stderr)
    return EXIT_OK if res.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beliefplan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--pretty", action="store_true", help="human-readable table on stdout")

    g = sub.add_parser("gen", help="generate a random model")
    g.add_argument("--config", help="generator spec (JSON)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory or .json path (default: stdout)")
    g.add_argument("--num-vars", dest="num_vars", type=int)
    g.add_argument("--num-actions", dest="num_actions", type=int)
    g.add_argument("--num-observations", dest="num_observations", type=int)
    g.add_argument("--eta-min", dest="eta_min", type=float)
    g.add_argument("--obs-determinism", dest="obs_determinism", type=float)
    g.add_argument("--reward-range", dest="reward_range", type=float, nargs=2)
    g.add_argument("--discount", type=float)
    g.add_argument("--num-classes", dest="num_classes", type=int)
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("validate", help="check a model file")
    v.add_argument("--model", required=True)
    v.set_defaults(func=cmd_validate)

    pl = sub.add_parser("plan", help="run the sparse-sampling planner online")
    common(pl)
    pl.add_argument("--steps", type=int, help="number of steps (default: evaluator.T)")
    pl.set_defaults(func=cmd_plan)

    o = sub.add_parser("oracle", help="exhaustive expectimax value at a belief")
    o.add_argument("--model", required=True)
    o.add_argument("--depth", type=int, required=True)
    o.add_argument("--mode", choices=("true", "simplified"), default="true")
    o.add_argument("--belief", default="dirac", help="'dirac', 'uniform' or comma-separated probabilities")
    o.add_argument("--budget", type=int, default=10_000_000)
    o.add_argument("--pretty", action="store_true")
    o.set_defaults(func=cmd_oracle)

    m = sub.add_parser("measure", help="epsilon, eta and belief-drift measurements")
    common(m)
    m.set_defaults(func=cmd_measure)

    c = sub.add_parser("check", help="value-gap bound checks along planner histories")
    common(c)
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.getLogger(__name__).info("kernel backend: %s", kernels.BACKEND)
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    try:
        return args.func(args)
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL if isinstance(exc, ModelError) else EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
